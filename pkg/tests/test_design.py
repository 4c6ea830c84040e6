import math

import numpy as np
import pytest

from thermal_designs.design import (
    MomentAccumulator,
    _projector_from_permutations,
    accumulate_moment,
    build_sym_projector,
    check_capacity,
    cycle_types,
    distance_cycle_expansion,
    distance_sym_overlap,
    distance_trace_norm,
    ground_state_bound,
    load_checkpoint,
    save_checkpoint,
    symmetric_block_weight,
    tensor_power,
    tensor_power_block_sum,
)
from thermal_designs.ensembles import EnsembleSpec, sample_gue, substream
from thermal_designs.errors import CapacityError, ConfigError
from thermal_designs.spectral import boltzmann_probs, eig_hermitian, thermal_state


def random_density(rng, D):
    a = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    return 0.5 * (rho + rho.conj().T)


def filled_accumulator(rhos, t):
    acc = MomentAccumulator(rhos.shape[1], t)
    for rho in rhos:
        accumulate_moment(acc, rho)
    return acc


# ---------------------------------------------------------------------------
# cycle types

def test_cycle_types_small_tables():
    by_parts = {ct.parts: ct.multiplicity for ct in cycle_types(2)}
    assert by_parts == {(1, 1): 1, (2,): 1}
    by_parts = {ct.parts: ct.multiplicity for ct in cycle_types(3)}
    assert by_parts == {(1, 1, 1): 1, (2, 1): 3, (3,): 2}
    by_parts = {ct.parts: ct.multiplicity for ct in cycle_types(4)}
    assert by_parts == {(1, 1, 1, 1): 1, (2, 1, 1): 6, (2, 2): 3,
                        (3, 1): 8, (4,): 6}


def test_cycle_multiplicities_sum_to_factorial():
    for t in range(1, 13):
        total = sum(ct.multiplicity for ct in cycle_types(t))
        assert total == math.factorial(t)


# ---------------------------------------------------------------------------
# symmetric projector

@pytest.mark.parametrize("D,t", [(2, 2), (2, 3), (3, 2), (2, 4), (3, 3), (4, 2)])
def test_projector_equals_explicit_permutation_average(D, t):
    closed = build_sym_projector(D, t).matrix
    explicit = _projector_from_permutations(D, t)
    assert np.max(np.abs(closed - explicit)) <= 1e-14


@pytest.mark.parametrize("D,t", [(2, 2), (4, 2), (8, 2), (32, 2), (2, 3),
                                 (3, 3), (8, 3), (2, 6), (4, 5), (2, 10),
                                 (2, 12)])
def test_projector_invariants_under_cap(D, t):
    proj = build_sym_projector(D, t)
    assert proj.d_sym == math.comb(D + t - 1, t)
    assert abs(np.trace(proj.matrix) - proj.d_sym) <= 1e-8
    assert np.max(np.abs(proj.matrix @ proj.matrix - proj.matrix)) <= 1e-10
    assert np.max(np.abs(proj.matrix - proj.matrix.T)) == 0.0


def test_projector_t1_is_identity():
    proj = build_sym_projector(5, 1)
    assert np.array_equal(proj.matrix, np.eye(5))
    assert proj.d_sym == 5


def test_projector_d2_t2_triplet():
    proj = build_sym_projector(2, 2)
    assert proj.d_sym == 3
    assert np.isclose(np.trace(proj.matrix), 3.0)
    assert np.linalg.matrix_rank(proj.matrix) == 3


def test_projector_capacity_error_names_request():
    with pytest.raises(CapacityError, match=r"D=8, t=5"):
        build_sym_projector(8, 5)
    check_capacity(8, 5, memory_cap=8**5)  # raised cap admits it


def test_pure_states_live_in_symmetric_subspace():
    rng = np.random.default_rng(3)
    proj = build_sym_projector(4, 3)
    for _ in range(5):
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        v /= np.linalg.norm(v)
        psi = np.outer(v, v.conj())
        mom = tensor_power(psi, 3)
        overlap = np.einsum("ij,ji->", mom, proj.matrix).real
        assert abs(overlap - 1.0) <= 1e-10


# ---------------------------------------------------------------------------
# moment accumulation

def test_accumulator_single_update_is_exact():
    rng = np.random.default_rng(5)
    rho = random_density(rng, 3)
    acc = MomentAccumulator(3, 2).update(rho)
    assert acc.count == 1
    assert np.array_equal(acc.mean, np.kron(rho, rho))


def test_accumulator_identical_samples():
    rng = np.random.default_rng(6)
    rho = random_density(rng, 2)
    acc = MomentAccumulator(2, 3)
    for _ in range(7):
        acc.update(rho)
    assert np.max(np.abs(acc.mean - tensor_power(rho, 3))) <= 1e-14


def test_accumulator_trace_and_positivity():
    rng = np.random.default_rng(7)
    rhos = np.array([random_density(rng, 4) for _ in range(20)])
    acc = filled_accumulator(rhos, 2)
    assert abs(np.trace(acc.mean).real - 1.0) <= 1e-8
    assert np.linalg.eigvalsh(acc.mean).min() >= -1e-10


def test_accumulator_block_and_merge_agree_with_streaming():
    rng = np.random.default_rng(8)
    rhos = np.array([random_density(rng, 3) for _ in range(24)])
    streaming = filled_accumulator(rhos, 2)
    blocked = MomentAccumulator(3, 2).update_block(rhos)
    assert np.max(np.abs(streaming.mean - blocked.mean)) <= 1e-13
    left = MomentAccumulator(3, 2).update_block(rhos[:10])
    right = MomentAccumulator(3, 2).update_block(rhos[10:])
    left.merge(right)
    assert left.count == 24
    assert np.max(np.abs(left.mean - blocked.mean)) <= 1e-13


def test_accumulator_shape_validation():
    acc = MomentAccumulator(3, 2)
    with pytest.raises(ConfigError):
        acc.update(np.eye(4))
    with pytest.raises(CapacityError):
        MomentAccumulator(64, 3)


@pytest.mark.parametrize("t", [1, 2, 3, 4])
def test_tensor_power_block_sum_matches_kron(t):
    rng = np.random.default_rng(40 + t)
    rhos = np.array([random_density(rng, 3) for _ in range(6)])
    direct = sum(tensor_power(r, t) for r in rhos)
    fast = tensor_power_block_sum(rhos, t)
    assert np.max(np.abs(direct - fast)) <= 1e-12


# ---------------------------------------------------------------------------
# distance estimators

def test_distances_vanish_on_exact_design_moment():
    proj = build_sym_projector(3, 2)
    acc = MomentAccumulator(3, 2)
    acc.count = 1
    acc.mean = proj.matrix.astype(complex) / proj.d_sym
    assert distance_trace_norm(acc, proj) <= 1e-12
    assert abs(distance_sym_overlap(acc, proj)) <= 1e-12


def test_distances_at_beta_zero_closed_form():
    # every thermal state at beta=0 is I/D: distance is 1 - d_sym / D^t
    D, t = 4, 2
    proj = build_sym_projector(D, t)
    acc = MomentAccumulator(D, t).update(np.eye(D, dtype=complex) / D)
    assert abs(distance_trace_norm(acc, proj) - 0.375) <= 1e-12
    assert abs(distance_sym_overlap(acc, proj) - 0.375) <= 1e-12
    assert abs(symmetric_block_weight(acc, proj) - (1 / 16)) <= 1e-12


def test_overlap_below_trace_norm_on_random_accumulators():
    rng = np.random.default_rng(9)
    proj = build_sym_projector(3, 2)
    for _ in range(30):
        rhos = np.array([random_density(rng, 3)
                         for _ in range(int(rng.integers(1, 8)))])
        acc = filled_accumulator(rhos, 2)
        assert (distance_sym_overlap(acc, proj)
                <= distance_trace_norm(acc, proj) + 1e-10)


def test_cycle_expansion_identity_per_sample():
    # tr(rho^{(x)t} P_sym) equals the class-weighted purity products for
    # every single sample; this is the build-order oracle for the module.
    rng = np.random.default_rng(10)
    for t in (1, 2, 3):
        proj = build_sym_projector(4, t)
        rho = random_density(rng, 4)
        acc = MomentAccumulator(4, t).update(rho)
        eigs = np.linalg.eigvalsh(rho)
        table = np.array([[np.sum(eigs**m) for m in range(1, t + 1)]])
        table[0, 0] = 1.0
        gap = abs(distance_cycle_expansion(table)
                  - distance_sym_overlap(acc, proj))
        assert gap <= 1e-12


def test_cycle_expansion_beta_zero():
    # purities of I/D are D^{1-m}
    table = np.array([[1.0, 0.25]])
    assert abs(distance_cycle_expansion(table) - 0.375) <= 1e-15
    assert abs(distance_cycle_expansion(np.ones((5, 1)))) == 0.0


def test_cycle_expansion_validates_table():
    with pytest.raises(ConfigError):
        distance_cycle_expansion(np.array([[1.0, np.nan]]))
    with pytest.raises(ConfigError):
        distance_cycle_expansion(np.zeros((0, 2)))


def test_ground_state_bound_limits():
    assert ground_state_bound(np.ones(10), 4) == 0.0
    assert abs(ground_state_bound(np.full(6, 0.25), 2) - 0.9375) <= 1e-15
    assert ground_state_bound(np.array([0.0, 1.0]), 3) == 0.5
    with pytest.raises(ConfigError):
        ground_state_bound(np.array([1.2]), 2)


def test_ground_state_bound_large_beta_asymptotics():
    # 1 - mean(p0^t) ~ t * mean(exp(-gap * beta)) in the regime the
    # expansion itself assumes (t * beta >> 1/gap).  Unconditioned ensemble
    # means disagree badly because near-degenerate draws saturate; restrict
    # to draws with t * exp(-gap * beta) <= 0.05.
    spec = EnsembleSpec(kind="global", n=2, d=2, seed=314, samples=4000)
    energies = np.array([
        np.linalg.eigvalsh(sample_gue(4, substream(314, i)))
        for i in range(spec.samples)])
    beta, t = 6.0, 10
    gaps = energies[:, 1] - energies[:, 0]
    keep = t * np.exp(-gaps * beta) <= 0.05
    p0 = boltzmann_probs(energies[keep], beta)[:, 0]
    bound = ground_state_bound(p0, t)
    approx = t * np.exp(-gaps[keep] * beta).mean()
    assert abs(bound - approx) <= 0.10 * bound


def test_bound_upper_bounds_overlap_at_large_beta():
    # same samples, beta >= 3: the ground-state bound sits above the
    # symmetric-overlap estimate (statistically; here deterministic seed)
    rng = np.random.default_rng(11)
    proj = build_sym_projector(4, 2)
    for beta in (3.0, 5.0):
        acc = MomentAccumulator(4, 2)
        p0 = []
        for i in range(200):
            s = eig_hermitian(sample_gue(4, substream(2000, i)))
            acc.update(thermal_state(s, beta))
            p0.append(boltzmann_probs(s.energies, beta)[0])
        bound = ground_state_bound(np.array(p0), 2)
        assert bound >= distance_sym_overlap(acc, proj) - 1e-12


# ---------------------------------------------------------------------------
# checkpoints

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(12)
    rhos = np.array([random_density(rng, 3) for _ in range(5)])
    acc = filled_accumulator(rhos, 2)
    path = tmp_path / "acc.bin"
    save_checkpoint(acc, path)
    again = load_checkpoint(path)
    assert (again.D, again.t, again.count) == (3, 2, 5)
    assert np.array_equal(again.mean, acc.mean)
    save_checkpoint(acc, tmp_path / "b.bin")
    assert (tmp_path / "acc.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ConfigError):
        load_checkpoint(path)
    acc = MomentAccumulator(2, 2).update(np.eye(2, dtype=complex) / 2)
    save_checkpoint(acc, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ConfigError, match="truncated"):
        load_checkpoint(path)
