"""Snapshot algebra, channel inversion, and nonlinear U-statistics."""

import itertools
import math

import numpy as np
import pytest

from enumtools import weighted_shots
from paulimeter.errors import (
    DimensionMismatch,
    EmptyInput,
    FeasibilityError,
    InvalidBasis,
)
from paulimeter.estimators import ShotRecord, estimate
from paulimeter.paulis import PauliString, WeightedPauliSum
from paulimeter.schemes import plan_uniform_cs
from paulimeter.shadows import (
    ShadowSet,
    Snapshot,
    collect_shadows,
    estimate_observable_from_shadows,
    p3_ppt_certificate,
    pt_moment_ustat,
    purity_certificate,
    purity_ustat,
    reconstruct_mean,
    snapshot,
)
from paulimeter.states import (
    SubsystemMask,
    exact_expectation,
    exact_pt_moment,
    exact_subsystem_purity,
    ghz,
    random_mixed_state,
)

P = PauliString.from_text


def reduce_sites(mat: np.ndarray, n: int, keep) -> np.ndarray:
    """Trace a 2^n matrix down to the kept (0-based) sites."""
    t = mat.reshape((2,) * (2 * n))
    dropped = 0
    for site in range(n):
        if site in keep:
            continue
        ax = site - dropped
        t = np.trace(t, axis1=ax, axis2=ax + n - dropped)
        dropped += 1
    dim = 2 ** (n - dropped)
    return t.reshape(dim, dim)


def pt_sites(mat: np.ndarray, n: int, sites) -> np.ndarray:
    """Transpose the given (0-based) sites of a 2^n matrix."""
    t = mat.reshape((2,) * (2 * n))
    for s in sites:
        t = np.swapaxes(t, s, s + n)
    return t.reshape(2 ** n, 2 ** n)


def test_snapshot_single_site_factors():
    s = snapshot(P("Z"), (0,))
    np.testing.assert_allclose(s.to_matrix(), np.diag([2.0, -1.0]))
    s = snapshot(P("Z"), (1,))
    np.testing.assert_allclose(s.to_matrix(), np.diag([-1.0, 2.0]))
    minus = np.array([1.0, -1.0]) / np.sqrt(2)
    want = 3.0 * np.outer(minus, minus) - np.eye(2)
    np.testing.assert_allclose(snapshot(P("X"), (1,)).to_matrix(), want, atol=1e-12)


def test_snapshot_tensor_structure_and_trace():
    s = snapshot(P("ZX"), (0, 1))
    minus = np.array([1.0, -1.0]) / np.sqrt(2)
    x1 = 3.0 * np.outer(minus, minus) - np.eye(2)
    np.testing.assert_allclose(s.to_matrix(), np.kron(np.diag([2.0, -1.0]), x1), atol=1e-12)
    assert np.trace(s.to_matrix()) == pytest.approx(1.0, abs=1e-12)


def test_snapshot_validation():
    with pytest.raises(InvalidBasis):
        snapshot(P("ZI"), (0, 0))
    with pytest.raises(DimensionMismatch):
        snapshot(P("ZZ"), (0,))
    with pytest.raises(ValueError):
        Snapshot(P("ZZ"), (0, 2))


@pytest.mark.parametrize("n", [1, 2])
def test_channel_inversion_is_exact(n):
    rho = random_mixed_state(n, np.random.default_rng(17 + n))
    records, weights = weighted_shots(plan_uniform_cs(n), rho)
    mean = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for rec, w in zip(records, weights):
        mean += w * snapshot(rec.basis, rec.bits).to_matrix()
    np.testing.assert_allclose(mean, rho.mat, atol=1e-12)


def test_mean_reduced_snapshot_is_unbiased():
    rho = random_mixed_state(2, np.random.default_rng(23))
    records, weights = weighted_shots(plan_uniform_cs(2), rho)
    mean = np.zeros((2, 2), dtype=complex)
    for rec, w in zip(records, weights):
        mean += w * reduce_sites(snapshot(rec.basis, rec.bits).to_matrix(), 2, (0,))
    np.testing.assert_allclose(mean, reduce_sites(rho.mat, 2, (0,)), atol=1e-12)


def test_collect_shadows_deterministic():
    rho = ghz(3)
    a = collect_shadows(rho, 50, 9)
    b = collect_shadows(rho, 50, 9)
    np.testing.assert_array_equal(a.letters, b.letters)
    np.testing.assert_array_equal(a.signs, b.signs)
    assert len(a) == 50
    snap = a[4]
    assert snap.basis == PauliString.from_codes(a.letters[4].tolist())
    assert snap.bits == tuple(int(s < 0) for s in a.signs[4])
    with pytest.raises(ValueError):
        collect_shadows(rho, 0, 1)
    with pytest.raises(ValueError):
        collect_shadows(rho, 10, 1, mode="bulk")


def test_clifford24_mode_matches_pauli_law():
    rho = ghz(2)
    sh = collect_shadows(rho, 4000, 5, mode="clifford24")
    assert set(np.unique(sh.letters)) <= {1, 2, 3}
    o = WeightedPauliSum(2, [(1.0, P("ZZ")), (1.0, P("XX"))])
    est = estimate_observable_from_shadows(sh, o)
    assert est == pytest.approx(2.0, abs=0.5)


def test_records_round_trip_and_validation():
    rho = random_mixed_state(2, np.random.default_rng(2))
    sh = collect_shadows(rho, 30, 4)
    back = ShadowSet.from_records(sh.records(), 2)
    np.testing.assert_array_equal(back.letters, sh.letters)
    np.testing.assert_array_equal(back.signs, sh.signs)
    reps = [ShotRecord(P("XZ"), (0, 1), reps=3)]
    expanded = ShadowSet.from_records(reps, 2)
    assert len(expanded) == 3
    with pytest.raises(EmptyInput):
        ShadowSet.from_records([], 2)
    with pytest.raises(DimensionMismatch):
        ShadowSet.from_records([ShotRecord(P("X"), (0,))], 2)
    with pytest.raises(ValueError):
        ShadowSet(1, np.array([[4]]), np.array([[1]]))
    with pytest.raises(ValueError):
        ShadowSet(1, np.array([[1]]), np.array([[2]]))


def test_reconstruct_mean_matches_snapshot_average():
    rho = random_mixed_state(2, np.random.default_rng(31))
    sh = collect_shadows(rho, 40, 8)
    want = sum(sh[k].to_matrix() for k in range(40)) / 40
    got = reconstruct_mean(sh)
    np.testing.assert_allclose(got, want, atol=1e-12)
    assert np.trace(got).real == pytest.approx(1.0, abs=1e-12)
    big = collect_shadows(ghz(2), 3000, 12)
    dense = reconstruct_mean(big)
    assert np.max(np.abs(dense - ghz(2).mat)) < 0.4


def test_shadow_estimate_equals_uniform_kernel_estimate():
    rho = random_mixed_state(2, np.random.default_rng(6))
    o = WeightedPauliSum(2, [(0.7, P("ZX")), (-0.2, P("IY")), (0.4, P("XX"))])
    sh = collect_shadows(rho, 400, 7)
    plan = plan_uniform_cs(2)
    kernel = estimate(sh.records(), plan, o)
    assert estimate_observable_from_shadows(sh, o) == pytest.approx(
        kernel.value, abs=1e-10
    )
    assert abs(kernel.value - exact_expectation(rho, o)) < 5 * 3.0 / math.sqrt(400)


def test_estimate_observable_identity_term():
    sh = collect_shadows(ghz(2), 10, 1)
    o = WeightedPauliSum(2, [(0.5, P("II"))])
    assert estimate_observable_from_shadows(sh, o) == pytest.approx(0.5, abs=1e-12)


def test_purity_pair_values():
    assert purity_ustat(
        ShadowSet(1, [[3], [3]], [[1], [1]]), SubsystemMask.full(1)
    ) == pytest.approx(5.0)
    assert purity_ustat(
        ShadowSet(1, [[3], [3]], [[1], [-1]]), SubsystemMask.full(1)
    ) == pytest.approx(-4.0)
    assert purity_ustat(
        ShadowSet(1, [[3], [1]], [[1], [1]]), SubsystemMask.full(1)
    ) == pytest.approx(0.5)
    # per-site products for a two-qubit mask
    assert purity_ustat(
        ShadowSet(2, [[3, 1], [3, 1]], [[1, 1], [1, 1]]), SubsystemMask.full(2)
    ) == pytest.approx(25.0)
    assert purity_ustat(
        ShadowSet(2, [[3, 1], [3, 2]], [[1, 1], [1, 1]]), SubsystemMask.of(2, 1)
    ) == pytest.approx(5.0)


def test_purity_ustat_matches_matrix_brute_force():
    rho = random_mixed_state(3, np.random.default_rng(13))
    sh = collect_shadows(rho, 6, 3)
    mats = [sh[k].to_matrix() for k in range(6)]
    for members in ({1}, {1, 3}, {1, 2, 3}):
        mask = SubsystemMask(3, frozenset(members))
        keep = mask.indices
        red = [reduce_sites(m, 3, keep) for m in mats]
        total = 0.0
        for a, b in itertools.permutations(range(6), 2):
            total += np.trace(red[a] @ red[b]).real
        want = total / (6 * 5)
        assert purity_ustat(sh, mask) == pytest.approx(want, abs=1e-10)


def test_pt_moment_matches_matrix_brute_force():
    rho = random_mixed_state(2, np.random.default_rng(19))
    sh = collect_shadows(rho, 5, 21)
    mask = SubsystemMask.of(2, 1)
    mats = [pt_sites(sh[k].to_matrix(), 2, mask.indices) for k in range(5)]
    total2 = sum(
        np.trace(mats[a] @ mats[b]).real for a, b in itertools.permutations(range(5), 2)
    )
    assert pt_moment_ustat(sh, mask, 2) == pytest.approx(total2 / 20, abs=1e-10)
    total3 = sum(
        np.trace(mats[a] @ mats[b] @ mats[c]).real
        for a, b, c in itertools.permutations(range(5), 3)
    )
    assert pt_moment_ustat(sh, mask, 3) == pytest.approx(total3 / 60, abs=1e-10)


def test_pt_second_moment_equals_full_purity_estimator():
    sh = collect_shadows(random_mixed_state(3, np.random.default_rng(3)), 40, 5)
    full = SubsystemMask.full(3)
    for members in ({1}, {2, 3}):
        mask = SubsystemMask(3, frozenset(members))
        assert pt_moment_ustat(sh, mask, 2) == pytest.approx(
            purity_ustat(sh, full), abs=1e-10
        )


def test_pt_moment_mc_strategy():
    sh = collect_shadows(ghz(2), 60, 77)
    mask = SubsystemMask.of(2, 1)
    full = pt_moment_ustat(sh, mask, 3)
    one = pt_moment_ustat(sh, mask, 3, strategy="mc:2000", seed=5)
    two = pt_moment_ustat(sh, mask, 3, strategy="mc:2000", seed=5)
    assert one == two
    draws = np.array(
        [pt_moment_ustat(sh, mask, 3, strategy="mc:3000", seed=s) for s in range(30)]
    )
    se = draws.std(ddof=1) / math.sqrt(30) + 1e-12
    assert abs(draws.mean() - full) < 4 * se + 1e-9


def test_pt_moment_validation():
    sh = collect_shadows(ghz(2), 10, 1)
    mask = SubsystemMask.of(2, 1)
    with pytest.raises(ValueError):
        pt_moment_ustat(sh, mask, 4)
    with pytest.raises(ValueError):
        pt_moment_ustat(sh, mask, 3, strategy="mc:0")
    with pytest.raises(ValueError):
        pt_moment_ustat(sh, mask, 3, strategy="mc:x")
    with pytest.raises(ValueError):
        pt_moment_ustat(sh, mask, 3, strategy="sampled")
    tiny = ShadowSet(2, [[3, 3], [1, 1]], [[1, 1], [1, 1]])
    with pytest.raises(EmptyInput):
        pt_moment_ustat(tiny, mask, 3)
    with pytest.raises(EmptyInput):
        purity_ustat(ShadowSet(2, [[3, 3]], [[1, 1]]), mask)
    with pytest.raises(DimensionMismatch):
        purity_ustat(sh, SubsystemMask.of(3, 1))
    with pytest.raises(ValueError):
        purity_ustat(sh, SubsystemMask(2, frozenset()))


def test_dense_paths_refuse_wide_systems():
    n = 11
    letters = np.ones((3, n), dtype=np.int8)
    signs = np.ones((3, n), dtype=np.int8)
    sh = ShadowSet(n, letters, signs)
    with pytest.raises(FeasibilityError):
        pt_moment_ustat(sh, SubsystemMask.of(n, 1), 3)
    with pytest.raises(FeasibilityError):
        reconstruct_mean(sh)
    # the sampled strategy stays factorized and survives wide systems
    val = pt_moment_ustat(sh, SubsystemMask.of(n, 1), 3, strategy="mc:50", seed=1)
    assert np.isfinite(val)


def test_ghz4_statistics_and_certificates():
    rho = ghz(4)
    sh = collect_shadows(rho, 800, 42)
    cut = SubsystemMask.of(4, 1, 2)
    assert exact_subsystem_purity(rho, cut) == pytest.approx(0.5)
    assert purity_ustat(sh, cut) == pytest.approx(0.5, abs=0.2)
    assert purity_ustat(sh, SubsystemMask.full(4)) == pytest.approx(1.0, abs=0.25)
    cert = purity_certificate(sh, cut)
    assert set(cert) == {"purity_A", "purity_full", "flag"}
    assert cert["flag"] is True
    mom = p3_ppt_certificate(sh, cut)
    assert set(mom) == {"p2", "p3", "margin", "entangled"}
    assert exact_pt_moment(rho, cut, 2) ** 2 - exact_pt_moment(rho, cut, 3) == pytest.approx(0.75)
    assert mom["margin"] == pytest.approx(0.75, abs=0.65)
    assert mom["entangled"] is True
