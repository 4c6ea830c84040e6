import math

import numpy as np
import pytest

from thermal_designs.analysis import (
    CurveTable,
    dos_diagnostics,
    ensemble_spectra,
    estimate_beta_c,
    feasible_estimators,
    numeric_derivative,
    run_sweep,
    threshold_temperature,
)
from thermal_designs.ensembles import EnsembleSpec
from thermal_designs.errors import (
    CapacityError,
    ConfigError,
    UnsupportedEnsembleError,
)

GLOBAL_D4 = EnsembleSpec(kind="global", n=2, d=2, seed=101, samples=400)


def test_feasible_estimators_respect_cap():
    assert feasible_estimators(4, 2) == ("trace_norm", "sym_overlap",
                                         "cycle", "bound")
    assert feasible_estimators(32, 3) == ("cycle", "bound")
    assert feasible_estimators(32, 3, memory_cap=32**3) == (
        "trace_norm", "sym_overlap", "cycle", "bound")


def test_run_sweep_beta_zero_exact():
    res = run_sweep(GLOBAL_D4, 2, np.array([0.0]))
    for name in ("trace_norm", "sym_overlap", "cycle"):
        assert abs(res.estimates[name][0] - 0.375) <= 1e-6
    assert abs(res.estimates["bound"][0] - 0.9375) <= 1e-12


def test_run_sweep_grid_validation():
    with pytest.raises(ConfigError):
        run_sweep(GLOBAL_D4, 2, np.array([]))
    with pytest.raises(ConfigError):
        run_sweep(GLOBAL_D4, 2, np.array([0.0, 0.1, 0.3]))
    with pytest.raises(ConfigError):
        run_sweep(GLOBAL_D4, 2, np.array([-0.5, 0.0]))
    with pytest.raises(ConfigError):
        run_sweep(GLOBAL_D4, 2, np.array([0.2, 0.1]))
    with pytest.raises(ConfigError):
        run_sweep(GLOBAL_D4, 0, np.array([0.0]))


def test_run_sweep_capacity_abort():
    big = EnsembleSpec(kind="global", n=8, d=2, seed=1, samples=5)
    with pytest.raises(CapacityError):
        run_sweep(big, 2, np.array([0.0]), estimators=("trace_norm",))
    res = run_sweep(big, 2, np.array([0.0]))  # defaults drop to purity paths
    assert set(res.estimates) == {"cycle", "bound"}


def test_run_sweep_unknown_estimator():
    with pytest.raises(ConfigError):
        run_sweep(GLOBAL_D4, 2, np.array([0.0]), estimators=("fidelity",))


def test_spectrum_reuse_row_for_row():
    betas = np.array([0.4, 0.8])
    joint = run_sweep(GLOBAL_D4, 2, betas)
    for i, beta in enumerate(betas):
        single = run_sweep(GLOBAL_D4, 2, np.array([beta]))
        for name in joint.estimates:
            assert abs(joint.estimates[name][i]
                       - single.estimates[name][0]) <= 1e-12
        assert abs(joint.stderr[i] - single.stderr[0]) <= 1e-12


def test_sweep_thread_count_is_invisible():
    betas = np.array([0.0, 0.6, 1.2])
    a = run_sweep(GLOBAL_D4, 2, betas, threads=1)
    b = run_sweep(GLOBAL_D4, 2, betas, threads=3)
    for name in a.estimates:
        assert np.array_equal(a.estimates[name], b.estimates[name])
    assert np.array_equal(a.stderr, b.stderr)


def test_sweep_sandwich_and_identity_rows():
    betas = np.arange(0.0, 2.01, 0.5)
    res = run_sweep(GLOBAL_D4, 2, betas)
    for i in range(betas.size):
        assert (res.estimates["sym_overlap"][i]
                <= res.estimates["trace_norm"][i] + 1e-10)
        assert abs(res.estimates["sym_overlap"][i]
                   - res.estimates["cycle"][i]) <= 1e-10


def test_sweep_global_monotone_within_noise():
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=55, samples=2000)
    res = run_sweep(spec, 2, np.arange(0.0, 3.01, 0.5))
    for name in ("trace_norm", "sym_overlap", "cycle"):
        col = res.estimates[name]
        for i in range(len(col) - 1):
            slack = 3 * max(res.stderr[i], res.stderr[i + 1])
            assert col[i + 1] <= col[i] + slack


def test_sweep_bound_dominates_overlap_at_large_beta():
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=56, samples=1000)
    res = run_sweep(spec, 2, np.array([3.0, 5.0]))
    for i in range(2):
        assert (res.estimates["bound"][i]
                >= res.estimates["sym_overlap"][i] - 3 * res.stderr[i])


def test_sweep_estimates_in_range():
    res = run_sweep(GLOBAL_D4, 3, np.arange(0.0, 4.01, 1.0))
    for col in res.estimates.values():
        assert np.all(col >= -1e-10) and np.all(col <= 1.0 + 1e-12)
    assert res.grid == 1.0


def test_sweep_deep_thermal_limit():
    # at beta = 50 the global ensemble is essentially its ground-state
    # ensemble; what remains of the trace norm is Monte Carlo noise
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=57, samples=20_000)
    res = run_sweep(spec, 2, np.array([50.0]))
    assert res.estimates["trace_norm"][0] <= 0.02


def test_derivative_of_global_sweep_nonpositive_within_noise():
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=58, samples=2000)
    res = run_sweep(spec, 2, np.arange(0.0, 3.01, 0.5))
    deriv = numeric_derivative(res)
    for name in ("trace_norm", "sym_overlap", "cycle"):
        assert np.all(deriv.columns[name] <= 3 * deriv.stderr + 1e-12), name


def test_run_sweep_overlap_only_estimator():
    res = run_sweep(GLOBAL_D4, 2, np.array([0.8]),
                    estimators=("sym_overlap",))
    full = run_sweep(GLOBAL_D4, 2, np.array([0.8]))
    assert (res.estimates["sym_overlap"][0]
            == full.estimates["sym_overlap"][0])
    assert res.stderr[0] > 0  # jackknife falls back to the overlap column


def test_run_sweep_single_sample():
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=59, samples=1)
    res = run_sweep(spec, 2, np.array([0.0, 0.5]))
    for col in res.estimates.values():
        assert np.all(np.isfinite(col))
    assert np.all(res.stderr == 0.0)  # no blocks to jackknife


def test_ensemble_spectra_threading_bitwise():
    spec = EnsembleSpec(kind="local", n=3, d=2, k=2, graph="line",
                        seed=77, samples=600)
    e1, v1 = ensemble_spectra(spec, threads=1)
    e2, v2 = ensemble_spectra(spec, threads=4)
    assert np.array_equal(e1, e2) and np.array_equal(v1, v2)
    assert np.all(np.diff(e1, axis=1) >= 0)


# ---------------------------------------------------------------------------
# derivatives and the kink

def test_numeric_derivative_constant_and_linear():
    betas = np.arange(0.0, 1.01, 0.1)
    table = CurveTable(betas=betas,
                       columns={"cycle": np.full(betas.size, 0.3),
                                "bound": betas.copy()},
                       stderr=np.zeros(betas.size))
    deriv = numeric_derivative(table)
    assert np.max(np.abs(deriv.columns["cycle"])) == 0.0
    assert np.max(np.abs(deriv.columns["bound"] - 1.0)) <= 1e-10


def test_numeric_derivative_needs_three_rows():
    table = CurveTable(betas=np.array([0.0, 0.1]),
                       columns={"cycle": np.array([1.0, 2.0])})
    with pytest.raises(ConfigError):
        numeric_derivative(table)


def test_estimate_beta_c_synthetic_recovery():
    # ground truth: quadratic glued to an exponential tail at beta*=0.9
    rng = np.random.default_rng(3)
    betas = np.arange(0.0, 3.001, 0.05)
    a, bstar, rate = -0.35, 0.9, 2.5
    amp = a * bstar**2 / math.exp(-rate * bstar)
    y = np.where(betas <= bstar, a * betas**2,
                 amp * np.exp(-rate * betas))
    y = y + rng.normal(0.0, 1e-3, betas.size)
    kink = estimate_beta_c(CurveTable(betas=betas, columns={"cycle": y}))
    assert abs(kink.beta_c - 0.9) <= 0.05
    assert kink.column == "cycle"
    assert np.isfinite(kink.fit_quality)


def test_estimate_beta_c_requires_points_per_side():
    table = CurveTable(betas=np.arange(0.0, 0.31, 0.1),
                       columns={"cycle": np.zeros(4)})
    with pytest.raises(ConfigError):
        estimate_beta_c(table)


def test_estimate_beta_c_column_selection():
    betas = np.arange(0.0, 1.51, 0.1)
    y = -0.1 * betas**2
    table = CurveTable(betas=betas, columns={"bound": y})
    kink = estimate_beta_c(table)
    assert kink.column == "bound"
    with pytest.raises(ConfigError):
        estimate_beta_c(table, column="cycle")


# ---------------------------------------------------------------------------
# threshold temperatures

def test_threshold_sentinel_when_already_satisfied():
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=8, samples=100)
    assert math.isinf(threshold_temperature(spec, 2, 0.95))


def test_threshold_decreases_with_t():
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=8, samples=500)
    energies, _ = ensemble_spectra(spec, need_vectors=False)
    temps = [threshold_temperature(spec, t, 0.3, energies=energies)
             for t in (2, 4, 8, 12)]
    assert all(np.isfinite(temps))
    assert all(temps[i + 1] < temps[i] for i in range(len(temps) - 1))


def test_threshold_deterministic():
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=9, samples=300)
    assert (threshold_temperature(spec, 4, 0.25)
            == threshold_temperature(spec, 4, 0.25))


def test_threshold_validation():
    local = EnsembleSpec(kind="local", n=2, d=2, k=1, graph="line",
                         seed=1, samples=10)
    with pytest.raises(UnsupportedEnsembleError):
        threshold_temperature(local, 2, 0.3)
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=1, samples=10)
    for eps in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ConfigError):
            threshold_temperature(spec, 2, eps)


# ---------------------------------------------------------------------------
# density of states

def test_dos_histogram_normalized_single_sample():
    spec = EnsembleSpec(kind="global", n=1, d=2, seed=4, samples=1)
    report = dos_diagnostics(spec, bins=10)
    width = report.bin_centers[1] - report.bin_centers[0]
    assert abs(report.density.sum() * width - 1.0) <= 1e-12


def test_dos_global_semicircle_smoke():
    spec = EnsembleSpec(kind="global", n=4, d=2, seed=5, samples=400)
    report = dos_diagnostics(spec, bins=40)
    assert abs(report.excess_kurtosis - (-1.0)) <= 0.25
    assert report.sup_deviation < 0.2


def test_dos_bins_validation():
    spec = EnsembleSpec(kind="global", n=1, d=2, seed=4, samples=1)
    with pytest.raises(ConfigError):
        dos_diagnostics(spec, bins=5)
