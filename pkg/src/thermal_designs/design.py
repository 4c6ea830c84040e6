"""State t-design machinery: symmetric projector, moment accumulation,
and the distance estimators.

Three estimators of the distance between an ensemble of thermal states and
the unitarily invariant moment operator are provided, all evaluated from
the same Monte Carlo sample set:

* ``distance_trace_norm``    -- the defining quantity, half the trace norm
  of (mean rho^{\\otimes t} - projector/d_sym);
* ``distance_sym_overlap``   -- 1 - tr(mean . projector), exact for the
  unitarily invariant (global) ensemble and always a lower bound on the
  trace-norm value;
* ``distance_cycle_expansion`` -- the same overlap rewritten as purity
  products over permutation cycles, grouped by conjugacy class.  It needs
  no D^t-dimensional object, so it stays available above the memory cap.

The overlap and cycle forms agree to rounding on identical samples; that
identity is the module's strongest cross-check and is enforced in the
test suite.
"""

import functools
import itertools
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConfigError, NumericFailureError

DEFAULT_MEMORY_CAP = 4096

# Size cap (complex elements) on the batched kron intermediate; a fixed
# constant so chunking never depends on thread count.
_BLOCK_ELEMS = 4_000_000

_CHECKPOINT_MAGIC = b"THERMALDSGN-ACC1"

__all__ = [
    "DEFAULT_MEMORY_CAP", "CycleType", "cycle_types", "SymProjector",
    "build_sym_projector", "MomentAccumulator", "accumulate_moment",
    "tensor_power", "tensor_power_block_sum", "distance_trace_norm",
    "distance_sym_overlap", "distance_cycle_expansion", "ground_state_bound",
    "symmetric_block_weight", "save_checkpoint", "load_checkpoint",
    "check_capacity",
]


def check_capacity(D, t, memory_cap=DEFAULT_MEMORY_CAP):
    """Raise CapacityError if a dense (D^t)^2 operator exceeds the cap."""
    if D < 1 or t < 1:
        raise ConfigError(f"need D >= 1 and t >= 1, got D={D}, t={t}")
    if D**t > memory_cap:
        raise CapacityError(
            f"D^t = {D**t} for (D={D}, t={t}) exceeds the memory cap "
            f"{memory_cap}; only the cycle-expansion and ground-state-bound "
            f"estimators are available at this size")


@dataclass(frozen=True)
class CycleType:
    """One conjugacy class of S_t: cycle lengths plus the class size."""

    parts: tuple
    multiplicity: int


def cycle_types(t):
    """All integer partitions of t with their S_t class sizes.

    Class size of a partition with a_m parts equal to m is
    t! / prod_m (m^a_m a_m!); the sizes sum to t!.
    """
    t = int(t)
    if t < 1:
        raise ConfigError(f"tensor power t must be >= 1, got {t}")
    tf = math.factorial(t)
    out = []
    for parts in _partitions(t, t):
        denom = 1
        for m in set(parts):
            a = parts.count(m)
            denom *= m**a * math.factorial(a)
        out.append(CycleType(parts=parts, multiplicity=tf // denom))
    return out


def _partitions(remaining, maxpart):
    if remaining == 0:
        yield ()
        return
    for first in range(min(remaining, maxpart), 0, -1):
        for rest in _partitions(remaining - first, first):
            yield (first,) + rest


@dataclass(frozen=True)
class SymProjector:
    """Projector onto the symmetric subspace of (C^D)^{\\otimes t}.

    Equals the average of all t! tensor-factor permutation operators;
    its trace is d_sym = C(D+t-1, t).
    """

    D: int
    t: int
    matrix: np.ndarray
    d_sym: int


def build_sym_projector(D, t, memory_cap=DEFAULT_MEMORY_CAP):
    """Dense symmetric projector for (D, t) under the memory cap.

    The average over permutations is evaluated in closed form: the
    (row, col) entry counts the permutations mapping the col digit tuple
    to the row digit tuple, which is prod_m a_m! / t! when the tuples are
    rearrangements of each other (a_m = digit multiplicities) and zero
    otherwise.  This is exactly (1/t!) sum_sigma V_sigma without the t!
    loop; the explicit sum is kept in the tests as an oracle.
    """
    check_capacity(D, t, memory_cap)
    dim = D**t
    digits = np.indices((D,) * t).reshape(t, dim)
    types = np.sort(digits, axis=0).T  # (dim, t) sorted digit rows
    _, class_of = np.unique(types, axis=0, return_inverse=True)
    tf = math.factorial(t)
    matrix = np.zeros((dim, dim))
    for c in range(class_of.max() + 1):
        members = np.nonzero(class_of == c)[0]
        counts = np.unique(types[members[0]], return_counts=True)[1]
        weight = math.prod(math.factorial(int(a)) for a in counts) / tf
        matrix[np.ix_(members, members)] = weight
    return SymProjector(D=D, t=t, matrix=matrix, d_sym=math.comb(D + t - 1, t))


def _projector_from_permutations(D, t):
    """Literal (1/t!) sum of permutation operators; test oracle only."""
    dim = D**t
    digits = np.indices((D,) * t).reshape(t, dim)
    place = D ** np.arange(t - 1, -1, -1)
    matrix = np.zeros((dim, dim))
    src = np.arange(dim)
    for sigma in itertools.permutations(range(t)):
        dst = place @ digits[list(sigma)]
        matrix[dst, src] += 1.0
    return matrix / math.factorial(t)


def tensor_power(rho, t):
    """rho^{\\otimes t} by repeated Kronecker product."""
    if t < 1:
        raise ConfigError(f"tensor power t must be >= 1, got {t}")
    return functools.reduce(np.kron, [rho] * t)


def tensor_power_block_sum(rhos, t):
    """sum_s rho_s^{\\otimes t} for a (B, D, D) stack of density matrices.

    The sample axis is contracted with a single tensordot (a GEMM), which
    is what makes large sweeps affordable; sub-chunking bounds the batched
    kron intermediate and depends only on (D, t), never on thread count,
    so results are bit-reproducible.
    """
    rhos = np.asarray(rhos)
    if rhos.ndim != 3 or rhos.shape[1] != rhos.shape[2]:
        raise ConfigError(f"expected a (B, D, D) stack, got shape {rhos.shape}")
    B, D, _ = rhos.shape
    if t == 1:
        return rhos.sum(axis=0)
    out = np.zeros((D**t, D**t), dtype=np.complex128)
    per_sample = D ** (2 * (t - 1))
    chunk = max(1, _BLOCK_ELEMS // per_sample)
    for start in range(0, B, chunk):
        blk = rhos[start:start + chunk]
        nb = blk.shape[0]
        K = blk
        for _ in range(t - 2):
            ka, kb = K.shape[1], K.shape[2]
            K = np.einsum("sab,scd->sacbd", K, blk).reshape(nb, ka * D, kb * D)
        kdim = K.shape[1]
        T = np.tensordot(K, blk, axes=(0, 0))
        out += T.reshape(kdim, kdim, D, D).transpose(0, 2, 1, 3).reshape(
            kdim * D, kdim * D)
    return out


class MomentAccumulator:
    """Streaming mean of rho^{\\otimes t} over Monte Carlo samples.

    Single writer; parallel reductions keep one accumulator per worker and
    merge in fixed index order.
    """

    def __init__(self, D, t, memory_cap=DEFAULT_MEMORY_CAP):
        check_capacity(D, t, memory_cap)
        self.D = int(D)
        self.t = int(t)
        self.count = 0
        self.mean = np.zeros((D**t, D**t), dtype=np.complex128)

    def update(self, rho):
        """Fold one density matrix into the running mean."""
        rho = np.asarray(rho)
        if rho.shape != (self.D, self.D):
            raise ConfigError(
                f"density matrix of shape {rho.shape} does not match D={self.D}")
        self.count += 1
        self.mean += (tensor_power(rho, self.t) - self.mean) / self.count
        return self

    def update_block(self, rhos):
        """Fold a (B, D, D) stack at once; the blocked form of `update`."""
        rhos = np.asarray(rhos)
        if rhos.ndim != 3 or rhos.shape[1:] != (self.D, self.D):
            raise ConfigError(
                f"stack of shape {rhos.shape} does not match D={self.D}")
        b = rhos.shape[0]
        if b == 0:
            return self
        block = tensor_power_block_sum(rhos, self.t)
        self.count += b
        self.mean += (block - b * self.mean) / self.count
        return self

    def merge(self, other):
        """Absorb another accumulator (same D, t); call in fixed order."""
        if (other.D, other.t) != (self.D, self.t):
            raise ConfigError("cannot merge accumulators of different (D, t)")
        if other.count == 0:
            return self
        total = self.count + other.count
        self.mean += (other.count / total) * (other.mean - self.mean)
        self.count = total
        return self


def accumulate_moment(acc, rho):
    """Functional alias for MomentAccumulator.update."""
    return acc.update(rho)


def distance_trace_norm(acc, proj):
    """Half trace norm of (mean moment - projector/d_sym); in [0, 1]."""
    _check_pair(acc, proj)
    delta = acc.mean - proj.matrix / proj.d_sym
    try:
        eigs = np.linalg.eigvalsh(delta)
    except np.linalg.LinAlgError as exc:
        raise NumericFailureError(f"trace-norm eigensolve failed: {exc}") from exc
    return float(0.5 * np.abs(eigs).sum())


def distance_sym_overlap(acc, proj):
    """1 - tr(mean . projector); lower bound on the trace-norm distance."""
    _check_pair(acc, proj)
    return float(1.0 - np.einsum("ij,ji->", acc.mean, proj.matrix).real)


def symmetric_block_weight(acc, proj):
    """tr(mean . projector)/d_sym, the natural symmetric-block eigenvalue
    estimate for a finite sample set."""
    _check_pair(acc, proj)
    return float(np.einsum("ij,ji->", acc.mean, proj.matrix).real / proj.d_sym)


def distance_cycle_expansion(purity_table):
    """Distance from per-sample purities tr rho^m, m = 1..t.

    Evaluates 1 - (1/t!) sum over cycle types of
    multiplicity * mean_s prod_{parts} purity_s(part); algebraically equal
    to `distance_sym_overlap` on the same samples.
    """
    table = np.asarray(purity_table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 1:
        raise ConfigError(f"purity table of shape {table.shape} is not (N, t)")
    if not np.all(np.isfinite(table)):
        raise ConfigError("purity table has missing or non-finite rows")
    t = table.shape[1]
    total = 0.0
    for ct in cycle_types(t):
        prod = np.ones(table.shape[0])
        for part in ct.parts:
            prod = prod * table[:, part - 1]
        total += ct.multiplicity * prod.mean()
    return float(1.0 - total / math.factorial(t))


def ground_state_bound(ground_probs, t):
    """1 - mean(p_0^t), evaluated in the log domain.

    Upper-bounds the design distance of the global ensemble at large beta
    and becomes exact as beta -> infinity.
    """
    if int(t) < 1:
        raise ConfigError(f"tensor power t must be >= 1, got {t}")
    p = np.asarray(ground_probs, dtype=np.float64)
    if p.size == 0 or np.any(p < 0) or np.any(p > 1):
        raise ConfigError("ground-state probabilities must lie in [0, 1]")
    powered = np.zeros_like(p)
    pos = p > 0
    powered[pos] = np.exp(t * np.log(p[pos]))
    return float(1.0 - powered.mean())


def save_checkpoint(acc, path):
    """Binary accumulator dump; bit-exact across runs on one platform.

    Layout: 16-byte magic/version, then D, t, count as little-endian
    uint64, then the row-major mean as little-endian float64 -- all real
    parts followed by all imaginary parts.
    """
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(struct.pack("<QQQ", acc.D, acc.t, acc.count))
        fh.write(np.ascontiguousarray(acc.mean.real, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(acc.mean.imag, dtype="<f8").tobytes())


def load_checkpoint(path, memory_cap=DEFAULT_MEMORY_CAP):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:16] != _CHECKPOINT_MAGIC:
        raise ConfigError(f"{path} is not a moment-accumulator checkpoint")
    D, t, count = struct.unpack("<QQQ", raw[16:40])
    acc = MomentAccumulator(int(D), int(t), memory_cap=memory_cap)
    dim = acc.D**acc.t
    expect = 40 + 2 * 8 * dim * dim
    if len(raw) != expect:
        raise ConfigError(
            f"checkpoint {path} truncated: {len(raw)} bytes, expected {expect}")
    re = np.frombuffer(raw, dtype="<f8", count=dim * dim, offset=40)
    im = np.frombuffer(raw, dtype="<f8", count=dim * dim, offset=40 + 8 * dim * dim)
    acc.count = int(count)
    acc.mean = (re + 1j * im).reshape(dim, dim)
    return acc


def _check_pair(acc, proj):
    if acc.count < 1:
        raise ConfigError("moment accumulator is empty")
    if (acc.D, acc.t) != (proj.D, proj.t):
        raise ConfigError(
            f"accumulator (D={acc.D}, t={acc.t}) does not match projector "
            f"(D={proj.D}, t={proj.t})")
