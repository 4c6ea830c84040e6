"""Random global (GUE) and random k-local Hamiltonian ensembles.

The global ensemble is GUE(L): Hermitian L x L matrices with density
proportional to exp(-L/2 tr H^2).  Expanding tr H^2 fixes the entry
variances: 1/L on the diagonal, 1/(2L) for each real/imaginary part
off the diagonal; under this normalization the spectral support
converges to [-2, 2].

The k-local ensemble on n particles of local dimension d draws one
independent GUE(d^k) term per interaction set and embeds each term with
identities on the remaining sites.  Terms are added as drawn, without
rescaling.

All randomness is counter-based (Philox): the draw for sample i is a pure
function of (spec, i) and never depends on evaluation order or worker
count.
"""

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConfigError,
    InvalidDimensionError,
    InvalidLocalityError,
    InvalidTermError,
)

GLOBAL = "global"
LOCAL = "local"
LINE = "line"
COMPLETE = "complete"

_MASK64 = (1 << 64) - 1

__all__ = [
    "GLOBAL", "LOCAL", "LINE", "COMPLETE",
    "EnsembleSpec", "substream", "sample_gue", "interaction_sets",
    "embed_local_term", "sample_hamiltonian",
]


def substream(seed, sample_index, term_index=0):
    """Independent Gaussian stream for one (sample, term) pair.

    Philox is a counter-based generator: the sample and term indices are
    placed in the two high counter words, so distinct pairs can never
    collide (each stream would have to consume 2^128 values first) and no
    stream depends on any other having been drawn.
    """
    if sample_index < 0 or term_index < 0:
        raise ConfigError("sample and term indices must be nonnegative")
    counter = np.array([0, 0, sample_index, term_index], dtype=np.uint64)
    key = np.array([seed & _MASK64, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(counter=counter, key=key))


def sample_gue(L, stream):
    """Draw one GUE(L) matrix from `stream`.

    Only the diagonal and the upper triangle are sampled (diagonal first);
    the lower triangle is the conjugate mirror, so ``H == H.conj().T``
    holds exactly, not just to rounding.
    """
    if L < 1:
        raise InvalidDimensionError(f"GUE dimension must be >= 1, got {L}")
    diag = stream.normal(0.0, 1.0 / math.sqrt(L), size=L)
    upper = np.zeros((L, L), dtype=np.complex128)
    rows, cols = np.triu_indices(L, 1)
    if rows.size:
        sigma = 1.0 / math.sqrt(2.0 * L)
        re = stream.normal(0.0, sigma, size=rows.size)
        im = stream.normal(0.0, sigma, size=rows.size)
        upper[rows, cols] = re + 1j * im
    H = upper + upper.conj().T
    H[np.diag_indices(L)] = diag
    return H


def interaction_sets(n, k, graph):
    """Ordered interaction sets for a k-local model on n sites.

    line:     the n-k+1 windows of k consecutive sites, left to right.
    complete: all C(n, k) size-k subsets in lexicographic order.
    """
    if k < 1 or k > n:
        raise InvalidLocalityError(f"locality k={k} outside 1..n={n}")
    if graph == LINE:
        return [tuple(range(i, i + k)) for i in range(n - k + 1)]
    if graph == COMPLETE:
        return list(itertools.combinations(range(n), k))
    raise ConfigError(f"unknown interaction graph {graph!r}")


def embed_local_term(h, sites, n, d):
    """Embed a d^k-dimensional term on `sites`, identity elsewhere.

    Site 0 is the most significant digit of the computational-basis index;
    tensor factor j of `h` acts on sites[j].  Sites must be distinct and
    in increasing order (as produced by `interaction_sets`).
    """
    sites = tuple(int(s) for s in sites)
    k = len(sites)
    if k == 0 or len(set(sites)) != k or any(s < 0 or s >= n for s in sites):
        raise InvalidTermError(f"invalid site set {sites} for n={n}")
    if list(sites) != sorted(sites):
        raise InvalidTermError(f"sites must be increasing, got {sites}")
    h = np.asarray(h)
    if h.shape != (d**k, d**k):
        raise InvalidTermError(
            f"term of shape {h.shape} does not match d^k = {d**k}")
    rest = [s for s in range(n) if s not in sites]
    full = np.kron(h, np.eye(d ** (n - k), dtype=h.dtype))
    # `full` acts on factors ordered [sites..., rest...]; permute to 0..n-1.
    order = list(sites) + rest
    inv = np.argsort(order)
    tensor = full.reshape((d,) * (2 * n))
    tensor = tensor.transpose(list(inv) + [n + int(i) for i in inv])
    return np.ascontiguousarray(tensor.reshape(d**n, d**n))


@dataclass(frozen=True)
class EnsembleSpec:
    """Full description of a random-Hamiltonian ensemble.

    kind is "global" (one GUE(d^n) draw per sample) or "local" (a sum of
    embedded GUE(d^k) terms over the interaction sets of `graph`).  For the
    global kind, k and graph must be left unset.
    """

    kind: str
    n: int
    d: int
    seed: int
    samples: int
    k: int | None = None
    graph: str | None = None

    def __post_init__(self):
        if self.kind not in (GLOBAL, LOCAL):
            raise ConfigError(f"kind must be 'global' or 'local', got {self.kind!r}")
        if self.n < 1:
            raise ConfigError(f"particle count n must be >= 1, got {self.n}")
        if self.d < 2:
            raise ConfigError(f"local dimension d must be >= 2, got {self.d}")
        if self.samples < 1:
            raise ConfigError(f"sample count must be >= 1, got {self.samples}")
        if self.kind == GLOBAL:
            if self.k is not None or self.graph is not None:
                raise ConfigError("global ensembles take neither k nor graph")
        else:
            if self.k is None or self.graph is None:
                raise ConfigError("local ensembles require both k and graph")
            if self.graph not in (LINE, COMPLETE):
                raise ConfigError(f"graph must be 'line' or 'complete', got {self.graph!r}")
            if self.k < 1 or self.k > self.n:
                raise InvalidLocalityError(
                    f"locality k={self.k} outside 1..n={self.n}")

    @property
    def dim(self):
        """Hilbert-space dimension D = d^n."""
        return self.d ** self.n

    def sets(self):
        """Interaction sets (local kind only)."""
        if self.kind != LOCAL:
            raise ConfigError("interaction sets are defined for local ensembles")
        return interaction_sets(self.n, self.k, self.graph)

    def with_overrides(self, seed=None, samples=None):
        out = self
        if seed is not None:
            out = replace(out, seed=int(seed))
        if samples is not None:
            out = replace(out, samples=int(samples))
        return out

    def to_json(self):
        obj = {
            "kind": self.kind,
            "n": self.n,
            "d": self.d,
            "seed": self.seed,
            "samples": self.samples,
        }
        if self.kind == LOCAL:
            obj["k"] = self.k
            obj["graph"] = self.graph
        return obj

    @classmethod
    def from_json(cls, obj):
        if not isinstance(obj, dict):
            raise ConfigError("ensemble spec must be a JSON object")
        allowed = {"kind", "n", "d", "k", "graph", "seed", "samples"}
        unknown = set(obj) - allowed
        if unknown:
            raise ConfigError(f"unknown ensemble keys: {sorted(unknown)}")
        required = {"kind", "n", "d", "seed", "samples"}
        missing = required - set(obj)
        if missing:
            raise ConfigError(f"missing ensemble keys: {sorted(missing)}")
        for key in ("n", "d", "seed", "samples"):
            if not isinstance(obj[key], int) or isinstance(obj[key], bool):
                raise ConfigError(f"ensemble key {key!r} must be an integer")
        k = obj.get("k")
        graph = obj.get("graph")
        if k is not None and (not isinstance(k, int) or isinstance(k, bool)):
            raise ConfigError("ensemble key 'k' must be an integer")
        if graph is not None and not isinstance(graph, str):
            raise ConfigError("ensemble key 'graph' must be a string")
        return cls(kind=obj["kind"], n=obj["n"], d=obj["d"], seed=obj["seed"],
                   samples=obj["samples"], k=k, graph=graph)


def sample_hamiltonian(spec, i):
    """Sample i of the ensemble: a Hermitian d^n x d^n matrix.

    Deterministic in (spec, i): reruns and reorderings give bit-identical
    matrices.  Local samples sum one embedded GUE(d^k) draw per interaction
    set, each from its own (sample, term) substream.
    """
    if i < 0 or i >= spec.samples:
        raise ConfigError(f"sample index {i} outside 0..{spec.samples - 1}")
    if spec.kind == GLOBAL:
        return sample_gue(spec.dim, substream(spec.seed, i, 0))
    H = np.zeros((spec.dim, spec.dim), dtype=np.complex128)
    for e, sites in enumerate(spec.sets()):
        term = sample_gue(spec.d ** spec.k, substream(spec.seed, i, e))
        H += embed_local_term(term, sites, spec.n, spec.d)
    return H
