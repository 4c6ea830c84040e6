"""Curve CSV files: comma-separated data rows, '#' metadata comments.

One layout serves sweeps and their derivatives: the fixed header
``beta,trace_norm,sym_overlap,cycle,bound,stderr``, one row per grid
point with empty cells for estimators that were not computed, and
trailing ``# key: value`` comment lines recording the run configuration.
Floats are written with ``repr``, the shortest round-trip form, so a
rerun with the same configuration yields a byte-identical file.
"""

import numpy as np

from .analysis import CurveTable
from .errors import ConfigError, CsvFormatError

CURVE_HEADER = ("beta", "trace_norm", "sym_overlap", "cycle", "bound", "stderr")

__all__ = ["CURVE_HEADER", "fmt", "write_curve_csv", "read_curve_csv",
           "write_rows_csv"]


def fmt(value):
    """Shortest round-trip decimal form of a float."""
    return repr(float(value))


def write_curve_csv(path, table, metadata=()):
    """Write a CurveTable plus trailing metadata comments."""
    lines = [",".join(CURVE_HEADER)]
    stderr = table.stderr
    for i in range(table.betas.size):
        cells = [fmt(table.betas[i])]
        for name in CURVE_HEADER[1:-1]:
            column = table.columns.get(name)
            cells.append(fmt(column[i]) if column is not None else "")
        cells.append(fmt(stderr[i]) if stderr is not None else "")
        lines.append(",".join(cells))
    _write_lines(path, lines, metadata)


def write_rows_csv(path, header, rows, metadata=()):
    """Write a plain numeric table (threshold and DOS outputs)."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(cell) for cell in row))
    _write_lines(path, lines, metadata)


def _write_lines(path, lines, metadata):
    for key, value in metadata:
        lines.append(f"# {key}: {value}")
    try:
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def read_curve_csv(path):
    """Strict parser for the curve layout; returns (CurveTable, metadata).

    Raises CsvFormatError naming the offending line on any deviation:
    wrong header, wrong field count, or a cell that is neither empty nor
    a float.  A column must be filled on every row or on none.
    """
    try:
        with open(path, "r", newline="") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    metadata = {}
    header_seen = False
    cells_by_row = []
    for ln, line in enumerate(raw_lines, 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, sep, value = body.partition(":")
            if sep:
                metadata[key.strip()] = value.strip()
            continue
        cells = line.split(",")
        if not header_seen:
            if tuple(cells) != CURVE_HEADER:
                raise CsvFormatError(
                    f"{path}:{ln}: header {cells!r} does not match "
                    f"{list(CURVE_HEADER)}")
            header_seen = True
            continue
        if len(cells) != len(CURVE_HEADER):
            raise CsvFormatError(
                f"{path}:{ln}: expected {len(CURVE_HEADER)} fields, "
                f"got {len(cells)}")
        cells_by_row.append((ln, cells))
    if not header_seen:
        raise CsvFormatError(f"{path}: missing header line")
    if not cells_by_row:
        raise CsvFormatError(f"{path}: no data rows")

    parsed = {name: [] for name in CURVE_HEADER}
    for ln, cells in cells_by_row:
        for name, cell in zip(CURVE_HEADER, cells):
            if cell == "":
                parsed[name].append(None)
                continue
            try:
                parsed[name].append(float(cell))
            except ValueError:
                raise CsvFormatError(
                    f"{path}:{ln}: field {name!r} is not a float: {cell!r}")

    def column(name, required=False):
        values = parsed[name]
        filled = [v is not None for v in values]
        if not any(filled):
            if required:
                raise CsvFormatError(f"{path}: column {name!r} is empty")
            return None
        if not all(filled):
            raise CsvFormatError(
                f"{path}: column {name!r} is only partially filled")
        return np.array(values, dtype=np.float64)

    betas = column("beta", required=True)
    columns = {}
    for name in CURVE_HEADER[1:-1]:
        values = column(name)
        if values is not None:
            columns[name] = values
    stderr = column("stderr")
    return CurveTable(betas=betas, columns=columns, stderr=stderr), metadata
