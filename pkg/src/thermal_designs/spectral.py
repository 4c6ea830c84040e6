"""Spectra and the thermal quantities derived from them.

Every thermal quantity here flows from a single eigendecomposition: one
diagonalization per sampled Hamiltonian serves every inverse temperature
in a sweep.  All Boltzmann factors are evaluated with a ground-state shift
(log-sum-exp), so beta up to ~1e6 is safe.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidTemperatureError, NumericFailureError

__all__ = [
    "Spectrum", "GibbsWeights", "eig_hermitian", "boltzmann_probs",
    "log_partition", "gibbs_weights", "thermal_state", "purity_m",
    "internal_energy", "purity_beta_derivative",
]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.

    Column m of `vectors` belongs to `energies[m]`.
    """

    energies: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self):
        return self.energies.shape[0]

    @property
    def gap(self):
        """E_1 - E_0 (zero for a degenerate ground state)."""
        if self.dim < 2:
            return 0.0
        return float(self.energies[1] - self.energies[0])


def eig_hermitian(H, seed=None, sample_index=None):
    """Full eigendecomposition of a Hermitian matrix.

    Raises NumericFailureError (with seed provenance when given) if the
    eigensolver does not converge.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConfigError(f"matrix of shape {H.shape} is not square")
    scale = np.max(np.abs(H)) if H.size else 0.0
    if np.max(np.abs(H - H.conj().T)) > 1e-12 * max(scale, 1.0):
        raise ConfigError("matrix is not Hermitian")
    try:
        energies, vectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericFailureError(
            f"eigensolver failed: {exc}", seed=seed, sample_index=sample_index
        ) from exc
    return Spectrum(energies=energies, vectors=vectors)


def boltzmann_probs(energies, beta):
    """Normalized Boltzmann weights exp(-beta(E - E_min)) / sum.

    Works on any (..., D) stack of energy rows; the shift makes the
    weights invariant under a uniform energy offset and overflow-safe.
    """
    _check_beta(beta)
    energies = np.asarray(energies, dtype=np.float64)
    shifted = energies - energies.min(axis=-1, keepdims=True)
    w = np.exp(-beta * shifted)
    return w / w.sum(axis=-1, keepdims=True)


def log_partition(energies, beta):
    """log tr exp(-beta H) from the energies, by ground-state shift."""
    _check_beta(beta)
    energies = np.asarray(energies, dtype=np.float64)
    e0 = energies.min(axis=-1)
    w = np.exp(-beta * (energies - energies.min(axis=-1, keepdims=True)))
    return np.log(w.sum(axis=-1)) - beta * e0


@dataclass(frozen=True)
class GibbsWeights:
    """Gibbs populations p_m(beta) plus the log partition function."""

    beta: float
    probs: np.ndarray
    log_z: float


def gibbs_weights(spectrum, beta):
    _check_beta(beta)
    probs = boltzmann_probs(spectrum.energies, beta)
    return GibbsWeights(beta=float(beta), probs=probs,
                        log_z=float(log_partition(spectrum.energies, beta)))


def thermal_state(spectrum, beta):
    """Density operator exp(-beta H)/Z as V diag(p) V^dagger.

    The result is symmetrized so Hermiticity holds exactly.
    """
    p = gibbs_weights(spectrum, beta).probs
    V = spectrum.vectors
    rho = (V * p) @ V.conj().T
    return 0.5 * (rho + rho.conj().T)


def purity_m(spectrum, beta, m):
    """tr rho^m computed from the Gibbs populations, never matrix powers."""
    m = _check_order(m)
    if m == 1:
        return 1.0
    p = gibbs_weights(spectrum, beta).probs
    return float(np.sum(p ** m))


def internal_energy(spectrum, beta):
    """<H> at inverse temperature beta; nonincreasing in beta."""
    p = gibbs_weights(spectrum, beta).probs
    return float(p @ spectrum.energies)


def purity_beta_derivative(spectrum, beta, m):
    """d/d(beta) of tr rho^m, evaluated analytically.

    Equals m * Z(m beta)/Z(beta)^m * (<H>_beta - <H>_{m beta}); the ratio
    is formed in the log domain, where it is bounded by the dimension, so
    the expression never overflows.  Nonnegative for every spectrum, zero
    exactly at m = 1 and beta = 0.
    """
    m = _check_order(m)
    _check_beta(beta)
    if m == 1:
        return 0.0
    gb = gibbs_weights(spectrum, beta)
    gmb = gibbs_weights(spectrum, m * beta)
    log_ratio = gmb.log_z - m * gb.log_z
    ratio = np.exp(log_ratio)
    u_b = float(gb.probs @ spectrum.energies)
    u_mb = float(gmb.probs @ spectrum.energies)
    out = m * ratio * (u_b - u_mb)
    if not np.isfinite(out):
        raise NumericFailureError(
            f"purity derivative overflowed at beta={beta}, m={m}")
    return float(out)


def _check_beta(beta):
    if not np.isfinite(beta) or beta < 0:
        raise InvalidTemperatureError(
            f"inverse temperature must be finite and >= 0, got {beta}")


def _check_order(m):
    m = int(m)
    if m < 1:
        raise ConfigError(f"moment order must be >= 1, got {m}")
    return m
