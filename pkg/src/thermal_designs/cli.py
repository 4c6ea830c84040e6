"""Command-line entry point.

Subcommands: ``sweep`` (distance curve on a beta grid), ``derivative``
(differentiate a sweep CSV and locate the kink), ``threshold``
(temperatures at which the ground-state bound reaches epsilon), ``dos``
(pooled density of states against its reference curve), and ``check``
(reduced-scale invariant self-test).

All randomness flows from the single config seed.  Exit codes are stable:
0 success, 2 config error, 3 capacity error, 4 numeric failure.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import csvio
from .analysis import (
    ESTIMATORS,
    dos_diagnostics,
    ensemble_spectra,
    estimate_beta_c,
    feasible_estimators,
    numeric_derivative,
    run_sweep,
    threshold_temperature,
)
from .design import DEFAULT_MEMORY_CAP
from .ensembles import GLOBAL, EnsembleSpec
from .errors import (
    EXIT_CAPACITY,
    EXIT_CONFIG,
    EXIT_NUMERIC,
    EXIT_OK,
    CapacityError,
    ConfigError,
    NumericFailureError,
    UnsupportedEnsembleError,
)

ENV_THREADS = "THERMAL_DESIGNS_THREADS"

_CONFIG_KEYS = {"ensemble", "t", "beta_grid", "estimators", "output_path",
                "threads", "memory_cap"}


@dataclass
class RunConfig:
    """One JSON config file plus flag overrides; flags win."""

    ensemble: EnsembleSpec
    t: int | None = None
    beta_grid: tuple | None = None
    estimators: tuple | None = None
    output_path: str | None = None
    threads: int | None = None
    memory_cap: int = DEFAULT_MEMORY_CAP

    @classmethod
    def from_file(cls, path, seed=None, samples=None):
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "ensemble" not in obj:
            raise ConfigError("config is missing the 'ensemble' object")
        ensemble = EnsembleSpec.from_json(obj["ensemble"]).with_overrides(
            seed=seed, samples=samples)
        t = obj.get("t")
        if t is not None and (not isinstance(t, int) or isinstance(t, bool) or t < 1):
            raise ConfigError(f"config key 't' must be a positive integer, got {t!r}")
        grid = obj.get("beta_grid")
        if grid is not None:
            grid = _parse_grid(grid)
        estimators = obj.get("estimators")
        if estimators is not None:
            if (not isinstance(estimators, list)
                    or any(e not in ESTIMATORS for e in estimators)):
                raise ConfigError(
                    f"estimators must be a list drawn from {list(ESTIMATORS)}")
            estimators = tuple(estimators)
        cap = obj.get("memory_cap", DEFAULT_MEMORY_CAP)
        if not isinstance(cap, int) or isinstance(cap, bool) or cap < 1:
            raise ConfigError(f"memory_cap must be a positive integer, got {cap!r}")
        threads = obj.get("threads")
        if threads is not None and (not isinstance(threads, int)
                                    or isinstance(threads, bool) or threads < 1):
            raise ConfigError(f"threads must be a positive integer, got {threads!r}")
        output = obj.get("output_path")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output_path must be a string")
        return cls(ensemble=ensemble, t=t, beta_grid=grid, estimators=estimators,
                   output_path=output, threads=threads, memory_cap=cap)

    def betas(self):
        if self.beta_grid is None:
            raise ConfigError("config is missing 'beta_grid'")
        start, stop, step = self.beta_grid
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(count)

    def metadata_json(self):
        """Canonical numerical config; excludes execution details
        (threads, output path) so reruns compare byte-identical."""
        obj = {"ensemble": self.ensemble.to_json(), "memory_cap": self.memory_cap}
        if self.t is not None:
            obj["t"] = self.t
        if self.beta_grid is not None:
            start, stop, step = self.beta_grid
            obj["beta_grid"] = {"start": start, "stop": stop, "step": step}
        if self.estimators is not None:
            obj["estimators"] = list(self.estimators)
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _parse_grid(grid):
    if (not isinstance(grid, dict)
            or set(grid) != {"start", "stop", "step"}):
        raise ConfigError(
            "beta_grid must be an object with keys start, stop, step")
    start, stop, step = (float(grid[k]) for k in ("start", "stop", "step"))
    if not all(map(math.isfinite, (start, stop, step))):
        raise ConfigError("beta_grid values must be finite")
    if start < 0:
        raise ConfigError("beta_grid start must be nonnegative")
    if step <= 0:
        raise ConfigError("beta_grid step must be positive")
    if stop < start:
        raise ConfigError("beta_grid is empty (stop < start)")
    return (start, stop, step)


def _resolve_threads(flag, config_threads):
    if flag is not None:
        return flag
    if config_threads is not None:
        return config_threads
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS}={env!r} is not an integer")
        if value < 1:
            raise ConfigError(f"{ENV_THREADS} must be >= 1")
        return value
    return 1


def _resolve_output(flag, config_output):
    path = flag if flag is not None else config_output
    if path is None:
        raise ConfigError("no output path (use --output or config output_path)")
    return path


def cmd_sweep(args):
    config = RunConfig.from_file(args.config, seed=args.seed, samples=args.samples)
    if config.t is None:
        raise ConfigError("config is missing 't'")
    threads = _resolve_threads(args.threads, config.threads)
    output = _resolve_output(args.output, config.output_path)
    spec = config.ensemble
    if config.beta_grid is None:
        # local features live below beta ~ 3; global decay studies need
        # the longer, coarser grid
        grid = (0.0, 3.0, 0.05) if spec.kind != GLOBAL else (0.0, 8.0, 0.1)
        config = replace(config, beta_grid=grid)
    feasible = feasible_estimators(spec.dim, config.t, config.memory_cap)
    requested = config.estimators if config.estimators is not None else feasible
    print(f"(D, t) = ({spec.dim}, {config.t}); feasible estimators: "
          f"{', '.join(feasible)}; computing: {', '.join(requested)}",
          file=sys.stderr)
    result = run_sweep(spec, config.t, config.betas(),
                       estimators=requested, memory_cap=config.memory_cap,
                       threads=threads)
    metadata = [("config", config.metadata_json()), ("seed", str(spec.seed))]
    csvio.write_curve_csv(output, result.table(), metadata)
    print(f"wrote {output}", file=sys.stderr)
    return EXIT_OK


def cmd_derivative(args):
    table, meta = csvio.read_curve_csv(args.input)
    deriv = numeric_derivative(table)
    metadata = [(k, v) for k, v in meta.items() if k in ("config", "seed")]
    metadata.append(("curve", "derivative"))
    try:
        kink = estimate_beta_c(deriv)
        metadata += [
            ("beta_c", csvio.fmt(kink.beta_c)),
            ("kink_fit_residual", csvio.fmt(kink.fit_quality)),
            ("kink_below_exponent", csvio.fmt(kink.below_exponent)),
            ("kink_above_rate", csvio.fmt(kink.above_rate)),
            ("kink_above_offset", csvio.fmt(kink.above_offset)),
            ("kink_column", kink.column),
        ]
    except ConfigError as exc:
        metadata.append(("kink", f"unavailable: {exc}"))
    output = args.output
    if output is None:
        output = str(Path(args.input).with_suffix(".deriv.csv"))
    csvio.write_curve_csv(output, deriv, metadata)
    print(f"wrote {output}", file=sys.stderr)
    return EXIT_OK


def cmd_threshold(args):
    config = RunConfig.from_file(args.config, seed=args.seed, samples=args.samples)
    threads = _resolve_threads(args.threads, config.threads)
    output = _resolve_output(args.output, config.output_path)
    spec = config.ensemble
    if spec.kind != GLOBAL:
        raise UnsupportedEnsembleError(
            "threshold temperatures are defined for the global ensemble")
    t_list = _parse_int_list(args.t, "--t")
    eps_list = _parse_float_list(args.epsilon, "--epsilon")
    energies, _ = ensemble_spectra(spec, need_vectors=False, threads=threads)
    rows = []
    for t in t_list:
        for eps in eps_list:
            temp = threshold_temperature(spec, t, eps, energies=energies)
            beta_star = 0.0 if math.isinf(temp) else 1.0 / temp
            rows.append((t, eps, beta_star, temp))
    metadata = [("config", config.metadata_json()), ("seed", str(spec.seed))]
    csvio.write_rows_csv(output, ("t", "epsilon", "beta_star", "temperature"),
                         rows, metadata)
    print(f"wrote {output}", file=sys.stderr)
    return EXIT_OK


def cmd_dos(args):
    config = RunConfig.from_file(args.config, seed=args.seed, samples=args.samples)
    threads = _resolve_threads(args.threads, config.threads)
    output = _resolve_output(args.output, config.output_path)
    report = dos_diagnostics(config.ensemble, args.bins, threads=threads)
    rows = zip(report.bin_centers, report.density, report.reference_density)
    metadata = [
        ("config", config.metadata_json()),
        ("seed", str(config.ensemble.seed)),
        ("reference", "semicircle" if config.ensemble.kind == GLOBAL else "gaussian"),
        ("excess_kurtosis", csvio.fmt(report.excess_kurtosis)),
        ("sup_deviation", csvio.fmt(report.sup_deviation)),
    ]
    csvio.write_rows_csv(output, ("bin_center", "density", "reference_density"),
                         rows, metadata)
    print(f"wrote {output}", file=sys.stderr)
    return EXIT_OK


def cmd_check(args):
    threads = _resolve_threads(args.threads, None)
    failures = 0
    for name, passed, detail in _check_battery(threads):
        status = "PASS" if passed else "FAIL"
        print(f"check {name}: {status} ({detail})")
        failures += not passed
    return EXIT_OK if failures == 0 else EXIT_NUMERIC


def _check_battery(threads):
    """Reduced-scale invariant battery; each entry is (name, ok, detail)."""
    from . import design, spectral
    from .ensembles import sample_hamiltonian

    results = []

    spec = EnsembleSpec(kind="global", n=2, d=2, seed=20260808, samples=60)
    local = EnsembleSpec(kind="local", n=3, d=2, k=2, graph="line",
                         seed=20260808, samples=12)
    worst = 0.0
    for s, count in ((spec, 12), (local, 12)):
        for i in range(count):
            H = sample_hamiltonian(s, i)
            worst = max(worst, float(np.max(np.abs(H - H.conj().T))))
    results.append(("hermiticity", worst == 0.0, f"max |H - H^+| = {worst:g}"))

    sweep = run_sweep(spec, 2, np.array([0.0, 0.8]), threads=threads)
    target = 1.0 - 10.0 / 16.0
    dev = max(abs(sweep.estimates[name][0] - target)
              for name in ("trace_norm", "sym_overlap", "cycle"))
    results.append(("beta0_exact_value", dev <= 1e-6,
                    f"max deviation from {target} = {dev:.2e}"))

    gap = abs(sweep.estimates["cycle"][1] - sweep.estimates["sym_overlap"][1])
    results.append(("cycle_overlap_identity", gap <= 1e-10, f"gap = {gap:.2e}"))

    sandwich = max(sweep.estimates["sym_overlap"][i] - sweep.estimates["trace_norm"][i]
                   for i in range(2))
    results.append(("estimator_sandwich", sandwich <= 1e-10,
                    f"max overlap - trace_norm = {sandwich:.2e}"))

    rng = np.random.default_rng(99)
    worst_rel = 0.0
    for _ in range(20):
        s = spectral.eig_hermitian(_random_hermitian(rng, 6))
        beta = float(rng.uniform(0.05, 3.0))
        m = int(rng.integers(2, 6))
        exact = spectral.purity_beta_derivative(s, beta, m)
        h = 1e-5
        fd = (spectral.purity_m(s, beta + h, m)
              - spectral.purity_m(s, beta - h, m)) / (2 * h)
        worst_rel = max(worst_rel, abs(exact - fd) / max(abs(fd), 1e-300))
    results.append(("purity_derivative_analytic", worst_rel <= 1e-6,
                    f"worst relative error = {worst_rel:.2e}"))

    a = sample_hamiltonian(spec, 3)
    b = sample_hamiltonian(spec, 3)
    results.append(("sampling_determinism", bool(np.array_equal(a, b)),
                    "same (spec, i) twice"))

    proj = design.build_sym_projector(3, 2)
    idem = float(np.max(np.abs(proj.matrix @ proj.matrix - proj.matrix)))
    tr = abs(float(np.trace(proj.matrix)) - proj.d_sym)
    results.append(("projector_invariants", idem <= 1e-10 and tr <= 1e-8,
                    f"idempotence {idem:.2e}, trace gap {tr:.2e}"))
    return results


def _random_hermitian(rng, D):
    A = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    return 0.5 * (A + A.conj().T)


def _parse_int_list(text, flag):
    try:
        values = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}")
    if not values:
        raise ConfigError(f"{flag} list is empty")
    return values


def _parse_float_list(text, flag):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects comma-separated floats, got {text!r}")
    if not values:
        raise ConfigError(f"{flag} list is empty")
    return values


def build_parser():
    parser = argparse.ArgumentParser(
        prog="thermal-designs",
        description="Design distance of thermal-state ensembles of random "
                    "global and local Hamiltonians.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config file")
            p.add_argument("--seed", type=int, default=None,
                           help="override the ensemble seed")
            p.add_argument("--samples", type=int, default=None,
                           help="override the ensemble sample count")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (flag > config > "
                            f"{ENV_THREADS} > 1)")
        p.add_argument("--output", default=None, help="output CSV path")

    p = sub.add_parser("sweep", help="distance estimates on a beta grid")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("derivative",
                       help="differentiate a sweep CSV and locate the kink")
    p.add_argument("input", help="CSV produced by `sweep`")
    p.add_argument("--output", default=None,
                   help="output CSV path (default: INPUT with .deriv.csv)")
    p.set_defaults(func=cmd_derivative)

    p = sub.add_parser("threshold",
                       help="temperatures where the bound reaches epsilon")
    common(p)
    p.add_argument("--t", required=True, help="comma-separated tensor powers")
    p.add_argument("--epsilon", required=True,
                   help="comma-separated epsilon values")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("dos", help="pooled density-of-states diagnostics")
    common(p)
    p.add_argument("--bins", type=int, default=60, help="histogram bins")
    p.set_defaults(func=cmd_dos)

    p = sub.add_parser("check", help="reduced-scale invariant self-test")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except NumericFailureError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
