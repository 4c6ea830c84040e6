"""Beta sweeps over sampled ensembles, derivatives, kink location,
threshold temperatures, and density-of-states diagnostics.

A sweep diagonalizes every sampled Hamiltonian once and reuses the
spectra across the whole beta grid.  Sample blocks and jackknife bins are
fixed index ranges, and partial results are merged in index order, so a
sweep's output is bit-identical however many worker threads run it.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design import (
    DEFAULT_MEMORY_CAP,
    MomentAccumulator,
    build_sym_projector,
    check_capacity,
    cycle_types,
    tensor_power_block_sum,
)
from .ensembles import GLOBAL, EnsembleSpec, sample_hamiltonian
from .errors import (
    ConfigError,
    NumericFailureError,
    UnsupportedEnsembleError,
)
from .spectral import boltzmann_probs

ESTIMATORS = ("trace_norm", "sym_overlap", "cycle", "bound")
JACKKNIFE_BLOCKS = 20

_SAMPLE_CHUNK = 256  # fixed: sampling/diagonalization batch, thread-independent
_STDERR_PRIORITY = ("trace_norm", "cycle", "bound", "sym_overlap")

__all__ = [
    "ESTIMATORS", "JACKKNIFE_BLOCKS", "CurveTable", "SweepResult",
    "KinkEstimate", "DosReport", "feasible_estimators", "ensemble_spectra",
    "run_sweep", "numeric_derivative", "estimate_beta_c",
    "threshold_temperature", "dos_diagnostics",
]


@dataclass
class CurveTable:
    """A beta grid plus named estimate columns (and optional stderr)."""

    betas: np.ndarray
    columns: dict
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        for name in self.columns:
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown estimator column {name!r}")


@dataclass
class SweepResult:
    """Estimates of the design distance on a uniform beta grid."""

    spec: EnsembleSpec
    t: int
    betas: np.ndarray
    estimates: dict
    stderr: np.ndarray

    @property
    def grid(self):
        """Grid spacing h (0.0 for a single-point grid)."""
        if len(self.betas) < 2:
            return 0.0
        return float(self.betas[1] - self.betas[0])

    def table(self):
        return CurveTable(betas=self.betas, columns=dict(self.estimates),
                          stderr=self.stderr)


@dataclass(frozen=True)
class KinkEstimate:
    """Change point of a derivative curve and the two-side fit parameters."""

    beta_c: float
    fit_quality: float
    below_exponent: float
    above_rate: float
    above_offset: float
    column: str


@dataclass(frozen=True)
class DosReport:
    """Pooled-spectrum histogram against its matched reference curve."""

    bin_centers: np.ndarray
    density: np.ndarray
    reference_density: np.ndarray
    sup_deviation: float
    excess_kurtosis: float


def feasible_estimators(D, t, memory_cap=DEFAULT_MEMORY_CAP):
    """Estimators affordable at (D, t): the projector-based pair needs a
    dense D^t operator, the purity-based pair never does."""
    if D**t <= memory_cap:
        return ESTIMATORS
    return ("cycle", "bound")


def ensemble_spectra(spec, need_vectors=True, threads=1):
    """Sample and diagonalize the whole ensemble.

    Returns (energies, vectors): (N, D) ascending energies and, when
    requested, the (N, D, D) eigenvector stacks.  Work is chunked in fixed
    index ranges; threading changes timing only, never results.
    """
    N, D = spec.samples, spec.dim
    energies = np.empty((N, D))
    vectors = np.empty((N, D, D), dtype=np.complex128) if need_vectors else None

    def work(lo, hi):
        stack = np.empty((hi - lo, D, D), dtype=np.complex128)
        for j, i in enumerate(range(lo, hi)):
            stack[j] = sample_hamiltonian(spec, i)
        try:
            if need_vectors:
                w, v = np.linalg.eigh(stack)
            else:
                w, v = np.linalg.eigvalsh(stack), None
        except np.linalg.LinAlgError:
            w, v = _diagonalize_singly(stack, lo, spec, need_vectors)
        return lo, w, v

    chunks = [(lo, min(lo + _SAMPLE_CHUNK, N)) for lo in range(0, N, _SAMPLE_CHUNK)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda c: work(*c), chunks))
    else:
        results = [work(*c) for c in chunks]
    for lo, w, v in results:
        energies[lo:lo + w.shape[0]] = w
        if need_vectors:
            vectors[lo:lo + w.shape[0]] = v
    return energies, vectors


def _diagonalize_singly(stack, lo, spec, need_vectors):
    """Per-sample fallback so a solver failure names the exact draw."""
    ws, vs = [], []
    for j in range(stack.shape[0]):
        try:
            if need_vectors:
                w, v = np.linalg.eigh(stack[j])
                vs.append(v)
            else:
                w = np.linalg.eigvalsh(stack[j])
            ws.append(w)
        except np.linalg.LinAlgError as exc:
            raise NumericFailureError(
                f"eigensolver failed: {exc}",
                seed=spec.seed, sample_index=lo + j) from exc
    return np.array(ws), (np.array(vs) if need_vectors else None)


def run_sweep(spec, t, betas, estimators=None, memory_cap=DEFAULT_MEMORY_CAP,
              threads=1, jackknife_blocks=JACKKNIFE_BLOCKS):
    """Estimate the design distance on a uniform beta grid.

    Every feasible (or explicitly requested) estimator is evaluated per
    grid point; requesting a projector-based estimator above the memory
    cap aborts before any sampling.  stderr is a jackknife proxy over
    `jackknife_blocks` contiguous sample blocks: spread plus |bias| of the
    highest-priority stochastic column (trace_norm, then cycle, then
    bound).  The |bias| term matters: a trace norm of pure Monte Carlo
    noise sits well above zero, and the jackknife bias estimate is what
    detects that offset.
    """
    t = int(t)
    if t < 1:
        raise ConfigError(f"tensor power t must be >= 1, got {t}")
    betas = _check_grid(betas)
    D = spec.dim
    if estimators is None:
        estimators = feasible_estimators(D, t, memory_cap)
    else:
        estimators = tuple(estimators)
        if not estimators:
            raise ConfigError("at least one estimator must be requested")
        for name in estimators:
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {name!r}")
    moment_path = "trace_norm" in estimators or "sym_overlap" in estimators
    if moment_path:
        check_capacity(D, t, memory_cap)  # abort before sampling
        proj = build_sym_projector(D, t, memory_cap)

    N = spec.samples
    energies, vectors = ensemble_spectra(spec, need_vectors=moment_path,
                                         threads=threads)
    bins = _bin_edges(N, jackknife_blocks)
    g = len(bins) - 1

    estimates = {name: np.empty(len(betas)) for name in estimators}
    stderr = np.zeros(len(betas))

    for bi, beta in enumerate(betas):
        probs = boltzmann_probs(energies, beta)
        row_jk = {}

        if "cycle" in estimators:
            per_sample = _cycle_terms(probs, t)
            full, jk = _mean_estimates(per_sample, bins)
            estimates["cycle"][bi] = 1.0 - full
            row_jk["cycle"] = (1.0 - full, 1.0 - jk)
        if "bound" in estimators:
            per_sample = np.exp(t * np.log(probs[:, 0]))
            full, jk = _mean_estimates(per_sample, bins)
            estimates["bound"][bi] = 1.0 - full
            row_jk["bound"] = (1.0 - full, 1.0 - jk)

        if moment_path:
            x_bins = _moment_bins(vectors, probs, t, bins)
            x_sum = x_bins.sum(axis=0)
            acc = _as_accumulator(x_sum / N, N, D, t, memory_cap)
            if "sym_overlap" in estimators:
                overlap = _overlap(acc.mean, proj)
                estimates["sym_overlap"][bi] = overlap
            if "trace_norm" in estimators:
                tn = _trace_norm(acc.mean, proj)
                estimates["trace_norm"][bi] = tn
                jk = np.empty(g)
                for b in range(g):
                    nb = bins[b + 1] - bins[b]
                    x_b = (x_sum - x_bins[b]) / (N - nb) if N > nb else acc.mean
                    jk[b] = _trace_norm(x_b, proj)
                row_jk["trace_norm"] = (tn, jk)
            elif "sym_overlap" in estimators:
                jk = np.empty(g)
                for b in range(g):
                    nb = bins[b + 1] - bins[b]
                    x_b = (x_sum - x_bins[b]) / (N - nb) if N > nb else acc.mean
                    jk[b] = _overlap(x_b, proj)
                row_jk["sym_overlap"] = (overlap, jk)

        stderr[bi] = _stderr_proxy(row_jk)

    return SweepResult(spec=spec, t=t, betas=betas, estimates=estimates,
                       stderr=stderr)


def numeric_derivative(curve):
    """Column-wise d/d(beta): central differences inside, one-sided at the
    ends.  stderr, when present, is propagated through the same stencils."""
    table = curve.table() if isinstance(curve, SweepResult) else curve
    x = table.betas
    if x.size < 3:
        raise ConfigError(f"need at least 3 rows to differentiate, got {x.size}")
    columns = {name: _diff(y, x) for name, y in table.columns.items()}
    stderr = None
    if table.stderr is not None:
        se = np.asarray(table.stderr, dtype=np.float64)
        stderr = np.empty_like(se)
        stderr[1:-1] = np.sqrt(se[2:] ** 2 + se[:-2] ** 2) / (x[2:] - x[:-2])
        stderr[0] = np.sqrt(se[0] ** 2 + se[1] ** 2) / (x[1] - x[0])
        stderr[-1] = np.sqrt(se[-1] ** 2 + se[-2] ** 2) / (x[-1] - x[-2])
    return CurveTable(betas=x.copy(), columns=columns, stderr=stderr)


def estimate_beta_c(deriv, column=None, min_side=4):
    """Locate the kink of a derivative curve by change-point search.

    For every candidate grid point with at least `min_side` points on each
    side, the left side is fit to a*beta^2 and the right to
    amp*exp(-rate*beta) + offset (the offset is kept because for k=2 the
    derivative levels off above zero); the candidate minimizing the total
    squared residual wins.  The reported below_exponent comes from a
    separate log-log fit on the left segment, as a diagnostic of the
    quadratic law.
    """
    table = deriv.table() if isinstance(deriv, SweepResult) else deriv
    if column is None:
        column = next((c for c in _STDERR_PRIORITY if c in table.columns), None)
        if column is None:
            raise ConfigError("derivative curve has no estimator columns")
    if column not in table.columns:
        raise ConfigError(f"column {column!r} not present in the curve")
    x = table.betas
    y = np.asarray(table.columns[column], dtype=np.float64)
    candidates = range(min_side - 1, x.size - min_side)
    if not candidates:
        raise ConfigError(
            f"need at least {min_side} points on each side of the kink")
    best = None
    for ci in candidates:
        xl, yl = x[:ci + 1], y[:ci + 1]
        xr, yr = x[ci + 1:], y[ci + 1:]
        denom = float((xl**4).sum())
        a = float((xl**2 * yl).sum()) / denom if denom > 0 else 0.0
        ssr = float(((yl - a * xl**2) ** 2).sum())
        above_ssr, rate, offset = _fit_exp_plateau(xr, yr)
        ssr += above_ssr
        if best is None or ssr < best[0]:
            best = (ssr, float(x[ci]), rate, offset)
    ssr, beta_c, rate, offset = best
    return KinkEstimate(beta_c=beta_c, fit_quality=ssr,
                        below_exponent=_loglog_exponent(x, y, beta_c),
                        above_rate=rate, above_offset=offset,
                        column=column)


# decay-rate candidates for the above-side fit; below 0.05 the exponential
# is indistinguishable from a constant on these grids, above 60 from a step
_RATE_GRID = np.geomspace(0.05, 60.0, 91)


def _fit_exp_plateau(x, y):
    """Least squares for amp*exp(-rate*x) + offset by profiling.

    For a fixed rate the model is linear in (amp, offset), so an exact
    solve over a rate grid finds the global optimum deterministically;
    iterative fitting here is both slower and prone to the degenerate
    rate -> 0 direction where amp and offset trade off freely.
    """
    best = None
    ones = np.ones_like(x)
    for rate in _RATE_GRID:
        basis = np.column_stack([np.exp(-rate * x), ones])
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        resid = y - basis @ coef
        ssr = float(resid @ resid)
        if best is None or ssr < best[0]:
            best = (ssr, float(rate), float(coef[1]))
    return best


def _loglog_exponent(x, y, beta_c):
    mask = (x > 0) & (x <= beta_c)
    yl = np.abs(y[mask])
    if yl.size < 2 or yl.max() == 0:
        return float("nan")
    keep = yl > 1e-3 * yl.max()
    if keep.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(x[mask][keep]), np.log(yl[keep]), 1)[0]
    return float(slope)


def threshold_temperature(spec, t, epsilon, threads=1, energies=None):
    """Temperature 1/beta* at which the ground-state bound equals epsilon.

    Works on a frozen sample set (spec.seed, spec.samples), so the
    objective is deterministic and monotone and plain bisection suffices.
    Returns inf when the bound already satisfies epsilon at beta = 0.
    Pass precomputed `energies` to share one sample set across calls.
    """
    if spec.kind != GLOBAL:
        raise UnsupportedEnsembleError(
            "threshold temperatures are defined for the global ensemble")
    t = int(t)
    if t < 1:
        raise ConfigError(f"tensor power t must be >= 1, got {t}")
    if not (0.0 < epsilon < 1.0):
        raise ConfigError(f"epsilon must be in (0, 1), got {epsilon}")
    if energies is None:
        energies, _ = ensemble_spectra(spec, need_vectors=False, threads=threads)

    def bound_at(beta):
        p0 = boltzmann_probs(energies, beta)[:, 0]
        return 1.0 - float(np.exp(t * np.log(p0)).mean())

    if bound_at(0.0) <= epsilon:
        return math.inf
    lo, hi = 0.0, 1.0
    while bound_at(hi) > epsilon:
        lo, hi = hi, hi * 2.0
        if hi > 1e9:
            raise ConfigError(
                f"epsilon={epsilon} unreachable: bound({lo:g}) = "
                f"{bound_at(lo):.6g} still above it at the bracket limit")
    for _ in range(200):
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if bound_at(mid) > epsilon:
            lo = mid
        else:
            hi = mid
    beta_star = 0.5 * (lo + hi)
    return 1.0 / beta_star


def dos_diagnostics(spec, bins, threads=1):
    """Pooled eigenvalue histogram against the matched reference curve.

    Global ensembles are compared with a semicircle of the pooled mean and
    variance, local ensembles with a Gaussian.  Excess kurtosis of the
    pooled spectrum is the headline statistic: -1 for a semicircle, 0 for
    a Gaussian.
    """
    bins = int(bins)
    if bins < 10:
        raise ConfigError(f"need at least 10 histogram bins, got {bins}")
    energies, _ = ensemble_spectra(spec, need_vectors=False, threads=threads)
    pooled = energies.ravel()
    density, edges = np.histogram(pooled, bins=bins, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    mean = float(pooled.mean())
    var = float(pooled.var())
    if spec.kind == GLOBAL:
        radius_sq = 4.0 * var
        ref = np.sqrt(np.maximum(radius_sq - (centers - mean) ** 2, 0.0))
        ref *= 2.0 / (math.pi * radius_sq)
    else:
        ref = np.exp(-0.5 * (centers - mean) ** 2 / var) / math.sqrt(
            2.0 * math.pi * var)
    centered = pooled - mean
    m2 = float((centered**2).mean())
    m4 = float((centered**4).mean())
    return DosReport(bin_centers=centers, density=density,
                     reference_density=ref,
                     sup_deviation=float(np.max(np.abs(density - ref))),
                     excess_kurtosis=m4 / m2**2 - 3.0)


# ---------------------------------------------------------------------------
# sweep internals

def _check_grid(betas):
    betas = np.atleast_1d(np.asarray(betas, dtype=np.float64))
    if betas.size == 0:
        raise ConfigError("beta grid is empty")
    if not np.all(np.isfinite(betas)) or np.any(betas < 0):
        raise ConfigError("beta grid must be finite and nonnegative")
    if betas.size > 1:
        diffs = np.diff(betas)
        if np.any(diffs <= 0):
            raise ConfigError("beta grid must be strictly increasing")
        if np.ptp(diffs) > 1e-12 * max(1.0, float(diffs[0])):
            raise ConfigError("beta grid must be uniformly spaced")
    return betas


def _bin_edges(N, blocks):
    g = max(1, min(int(blocks), N))
    return np.linspace(0, N, g + 1).astype(int)


def _cycle_terms(probs, t):
    """Per-sample (1/t!) sum over cycle types of multiplicity x purity
    products; the cycle estimate is one minus its mean."""
    N = probs.shape[0]
    table = np.empty((N, t))
    table[:, 0] = 1.0
    power = probs.copy()
    for m in range(2, t + 1):
        power *= probs
        table[:, m - 1] = power.sum(axis=1)
    total = np.zeros(N)
    for ct in cycle_types(t):
        prod = np.ones(N)
        for part in ct.parts:
            prod = prod * table[:, part - 1]
        total += ct.multiplicity * prod
    return total / math.factorial(t)


def _mean_estimates(per_sample, bins):
    """Full mean plus the leave-one-block-out means, in bin order."""
    N = per_sample.shape[0]
    g = len(bins) - 1
    sums = np.add.reduceat(per_sample, bins[:-1])
    total = sums.sum()
    full = total / N
    counts = np.diff(bins)
    with np.errstate(invalid="ignore"):
        jk = np.where(counts < N, (total - sums) / (N - counts), full)
    return full, jk


def _moment_bins(vectors, probs, t, bins):
    """Per-jackknife-bin sums of rho^{\\otimes t}; fixed block arithmetic."""
    g = len(bins) - 1
    dim = vectors.shape[1] ** t
    x_bins = np.empty((g, dim, dim), dtype=np.complex128)
    for b in range(g):
        lo, hi = bins[b], bins[b + 1]
        x_bins[b] = 0.0
        for start in range(lo, hi, _SAMPLE_CHUNK):
            sl = slice(start, min(start + _SAMPLE_CHUNK, hi))
            rho = _thermal_stack(vectors[sl], probs[sl])
            x_bins[b] += tensor_power_block_sum(rho, t)
    return x_bins


def _thermal_stack(vectors, probs):
    """Thermal states for a slice of spectra, exactly Hermitian."""
    weighted = vectors * probs[:, None, :]
    rho = weighted @ vectors.conj().transpose(0, 2, 1)
    return 0.5 * (rho + rho.conj().transpose(0, 2, 1))


def _as_accumulator(mean, count, D, t, memory_cap):
    acc = MomentAccumulator(D, t, memory_cap=memory_cap)
    acc.mean = mean
    acc.count = count
    return acc


def _trace_norm(mean, proj):
    delta = mean - proj.matrix / proj.d_sym
    try:
        eigs = np.linalg.eigvalsh(delta)
    except np.linalg.LinAlgError as exc:
        raise NumericFailureError(f"trace-norm eigensolve failed: {exc}") from exc
    return float(0.5 * np.abs(eigs).sum())


def _overlap(mean, proj):
    return float(1.0 - np.einsum("ij,ji->", mean, proj.matrix).real)


def _stderr_proxy(row_jk):
    for name in _STDERR_PRIORITY:
        if name in row_jk:
            full, jk = row_jk[name]
            return _jackknife_se_bias(full, np.asarray(jk))
    return 0.0


def _jackknife_se_bias(full, jk):
    g = jk.size
    if g < 2:
        return 0.0
    center = jk.mean()
    se = math.sqrt((g - 1) / g * float(((jk - center) ** 2).sum()))
    bias = (g - 1) * (center - full)
    return se + abs(bias)


def _diff(y, x):
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    out[1:-1] = (y[2:] - y[:-2]) / (x[2:] - x[:-2])
    out[0] = (y[1] - y[0]) / (x[1] - x[0])
    out[-1] = (y[-1] - y[-2]) / (x[-1] - x[-2])
    return out
