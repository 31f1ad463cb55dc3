"""Estimator unbiasedness, variance formulas, and record-plan alignment."""

import math

import numpy as np
import pytest

from enumtools import enumerate_moments, sample_records, weighted_shots
from paulimeter.errors import (
    CoverageError,
    DimensionMismatch,
    EmptyInput,
    ForeignRecord,
    PlanMismatch,
)
from paulimeter.estimators import (
    ShotRecord,
    estimate,
    estimate_derandomized,
    per_shot_estimates,
    per_term_expectations,
    records_from_samples,
    sample_size_linear,
    sample_size_nonlinear,
    variance_generic,
    variance_grouping,
    variance_l1,
    variance_product_scheme,
)
from paulimeter.paulis import PauliString, WeightedPauliSum
from paulimeter.schemes import (
    BasisDistribution,
    MeasurementPlan,
    plan_derandomized,
    plan_l1,
    plan_lbcs,
    plan_ldf,
    plan_uniform_cs,
)
from paulimeter.states import exact_expectation, ghz, random_mixed_state

P = PauliString.from_text

OBS_A = WeightedPauliSum(2, [(0.6, P("ZX")), (-0.4, P("XI")), (0.3, P("YY"))])
OBS_B = WeightedPauliSum(2, [(0.8, P("ZZ")), (-0.5, P("XX"))])
RHO_A = random_mixed_state(2, np.random.default_rng(42))
RHO_B = random_mixed_state(2, np.random.default_rng(43))


def test_shot_record_validation():
    with pytest.raises(ValueError):
        ShotRecord(P("ZI"), (0, 0))
    with pytest.raises(ValueError):
        ShotRecord(P("ZZ"), (0,))
    with pytest.raises(ValueError):
        ShotRecord(P("ZZ"), (0, 2))
    with pytest.raises(ValueError):
        ShotRecord(P("ZZ"), (0, 0), reps=0)


def test_records_from_samples_folds_duplicates():
    bits = np.array([[0, 0], [1, 1], [0, 0], [0, 1], [0, 0]])
    recs = records_from_samples(P("ZZ"), bits)
    assert [(r.bits, r.reps) for r in recs] == [((0, 0), 3), ((1, 1), 1), ((0, 1), 1)]
    assert all(r.basis == P("ZZ") for r in recs)


@pytest.mark.parametrize(
    "plan_factory",
    [
        lambda o: plan_l1(o),
        lambda o: plan_ldf(o)[0],
        lambda o: plan_uniform_cs(o.n),
        lambda o: plan_lbcs(o),
    ],
    ids=["l1", "ldf", "cs", "lbcs"],
)
def test_enumerated_mean_is_exact(plan_factory):
    plan = plan_factory(OBS_A)
    mean, _ = enumerate_moments(plan, OBS_A, RHO_A)
    assert mean == pytest.approx(exact_expectation(RHO_A, OBS_A), abs=1e-12)


def test_variance_l1_matches_enumeration():
    plan = plan_l1(OBS_A)
    _, var = enumerate_moments(plan, OBS_A, RHO_A)
    assert var == pytest.approx(variance_l1(OBS_A, RHO_A), abs=1e-10)
    # closed form: ||alpha||_1^2 - mean^2
    mean = exact_expectation(RHO_A, OBS_A)
    assert variance_l1(OBS_A, RHO_A) == pytest.approx(1.3 ** 2 - mean ** 2, abs=1e-12)


def test_variance_grouping_matches_enumeration():
    o = WeightedPauliSum(
        2, [(1.0, P("ZZ")), (0.5, P("ZI")), (0.25, P("IZ")), (0.25, P("XX"))]
    )
    plan, _ = plan_ldf(o)
    _, var = enumerate_moments(plan, o, RHO_A)
    assert var == pytest.approx(variance_grouping(plan, o, RHO_A), abs=1e-10)


@pytest.mark.parametrize(
    "plan_factory", [lambda o: plan_uniform_cs(o.n), lambda o: plan_lbcs(o)], ids=["cs", "lbcs"]
)
def test_variance_product_matches_enumeration(plan_factory):
    plan = plan_factory(OBS_A)
    _, var = enumerate_moments(plan, OBS_A, RHO_A)
    exact, bound = variance_product_scheme(plan.distribution, OBS_A, RHO_A)
    assert var == pytest.approx(exact, abs=1e-10)
    assert bound >= exact - 1e-12
    max_supp = max(p.weight for p in OBS_A.paulis)
    assert bound == pytest.approx(3.0 ** max_supp * OBS_A.l1_norm ** 2)


def test_variance_generic_reproduces_l1():
    plan = plan_l1(OBS_A)
    assert variance_generic(plan, OBS_A, RHO_A) == pytest.approx(
        variance_l1(OBS_A, RHO_A), abs=1e-12
    )


def test_variance_generic_reproduces_grouping():
    plan, _ = plan_ldf(OBS_B)
    assert variance_generic(plan, OBS_B, RHO_B) == pytest.approx(
        variance_grouping(plan, OBS_B, RHO_B), abs=1e-12
    )


def test_variance_generic_reproduces_product():
    entries = tuple(
        (P(a + b), 1.0 / 9.0) for a in "XYZ" for b in "XYZ"
    )
    synthetic = MeasurementPlan(
        scheme="cs",
        n=2,
        terms=OBS_A.paulis,
        distribution=BasisDistribution("explicit", explicit=entries),
    )
    exact, _ = variance_product_scheme(plan_uniform_cs(2).distribution, OBS_A, RHO_A)
    assert variance_generic(synthetic, OBS_A, RHO_A) == pytest.approx(exact, abs=1e-10)


def test_variance_error_paths():
    cs = plan_uniform_cs(2)
    with pytest.raises(PlanMismatch):
        variance_grouping(cs, OBS_A, RHO_A)
    with pytest.raises(PlanMismatch):
        variance_generic(cs, OBS_A, RHO_A)
    with pytest.raises(PlanMismatch):
        variance_product_scheme(plan_l1(OBS_A).distribution, OBS_A, RHO_A)
    small = plan_l1(WeightedPauliSum(2, [(0.8, P("ZZ"))]))
    with pytest.raises(CoverageError):
        variance_generic(small, OBS_B, RHO_B)
    with pytest.raises(CoverageError):
        variance_grouping(plan_ldf(WeightedPauliSum(2, [(0.8, P("ZZ"))]))[0], OBS_B, RHO_B)
    with pytest.raises(DimensionMismatch):
        variance_l1(OBS_A, random_mixed_state(3, np.random.default_rng(1)))


def test_estimate_converges_and_reports():
    plan = plan_l1(OBS_A)
    records = sample_records(plan, RHO_A, 4000, seed=5)
    report = estimate(records, plan, OBS_A)
    exact = exact_expectation(RHO_A, OBS_A)
    sigma = math.sqrt(variance_l1(OBS_A, RHO_A) / 4000)
    assert abs(report.value - exact) < 5 * sigma
    assert report.n_samples == 4000
    assert len(report.s_l) == 3
    assert sum(report.s_l) == 4000
    assert report.epsilon0 == 0.0
    again = estimate(records, plan, OBS_A)
    assert again.value == report.value


def test_estimate_medianmeans():
    plan = plan_l1(OBS_A)
    records = sample_records(plan, RHO_A, 4000, seed=5)
    report = estimate(records, plan, OBS_A, aggregator="medianmeans", batches=10)
    exact = exact_expectation(RHO_A, OBS_A)
    assert abs(report.value - exact) < 0.25
    with pytest.raises(ValueError):
        estimate(records, plan, OBS_A, aggregator="medianmeans", batches=0)
    with pytest.raises(ValueError):
        estimate(records, plan, OBS_A, aggregator="mode")


def test_estimate_reports_unplanned_term_as_bias():
    subset = WeightedPauliSum(2, [(0.6, P("ZX")), (-0.4, P("XI"))])
    plan = plan_l1(subset)
    records = sample_records(plan, RHO_A, 200, seed=9)
    report = estimate(records, plan, OBS_A)
    assert report.s_l[2] == 0
    assert report.epsilon0 == pytest.approx(0.3)


def test_estimate_derandomized_ghz_exact():
    plan = plan_derandomized(OBS_B, 6)
    records = []
    rho = ghz(2)
    for k, basis in enumerate(plan.fixed_bases):
        records.extend(sample_records_for_basis(rho, basis, 25, seed=100 + k))
    report = estimate_derandomized(records, plan, OBS_B)
    # both ZZ and XX stabilize the GHZ pair, so every outcome is +1
    assert report.value == pytest.approx(0.3, abs=1e-12)
    assert report.s_l == (75, 75)
    assert report.epsilon0 == 0.0
    assert report.n_samples == 150


def sample_records_for_basis(rho, basis, nr, seed):
    from paulimeter.states import sample_outcomes

    rows = sample_outcomes(rho, basis, nr, seed)
    return [ShotRecord(basis, tuple(int(b) for b in row)) for row in rows]


def test_estimate_derandomized_reports_unhit_weight():
    plan = plan_derandomized(OBS_B, 1)
    assert plan.unhit_terms == (0,)
    basis = plan.fixed_bases[0]
    records = sample_records_for_basis(ghz(2), basis, 10, seed=3)
    report = estimate_derandomized(records, plan, OBS_B)
    assert report.value == pytest.approx(-0.5, abs=1e-12)
    assert report.epsilon0 == pytest.approx(0.8)
    assert report.s_l == (0, 10)


def test_alignment_and_kind_errors():
    plan = plan_derandomized(OBS_B, 4)
    rho = ghz(2)
    records = []
    for k, basis in enumerate(plan.fixed_bases):
        records.extend(sample_records_for_basis(rho, basis, 2, seed=k))
    estimate_derandomized(records, plan, OBS_B)  # aligned; should not raise
    with pytest.raises(PlanMismatch):
        estimate_derandomized(records[:-1], plan, OBS_B)
    shuffled = records[2:4] + records[0:2] + records[4:]
    if str(plan.fixed_bases[0]) != str(plan.fixed_bases[1]):
        with pytest.raises(ForeignRecord):
            estimate_derandomized(shuffled, plan, OBS_B)
    with pytest.raises(PlanMismatch):
        estimate(records, plan, OBS_B)
    rand_plan = plan_l1(OBS_B)
    rand_records = sample_records(rand_plan, rho, 10, seed=1)
    with pytest.raises(PlanMismatch):
        estimate_derandomized(rand_records, rand_plan, OBS_B)


def test_foreign_and_empty_records():
    plan = plan_l1(OBS_A)
    with pytest.raises(ForeignRecord):
        per_shot_estimates([ShotRecord(P("XY"), (0, 0))], plan, OBS_A)
    with pytest.raises(EmptyInput):
        estimate([], plan, OBS_A)
    with pytest.raises(DimensionMismatch):
        per_shot_estimates(
            [ShotRecord(P("ZZ"), (0, 0))],
            plan,
            WeightedPauliSum(3, [(1.0, P("ZZZ"))]),
        )


def test_per_term_expectations_ghz_sharp():
    plan, _ = plan_ldf(OBS_B)
    records = sample_records(plan, ghz(2), 600, seed=2)
    vals, s_l = per_term_expectations(records, plan, OBS_B)
    # stabilizer outcomes are +1 deterministically; inverse-probability
    # weighting makes each term's estimate exact on average over entries
    assert s_l.sum() == 600
    for val in vals:
        assert val == pytest.approx(1.0, abs=0.35)


def test_sample_size_formulas():
    want = math.ceil(2.0 * math.log(10) * math.log(20) * 4.0 / 0.1 ** 2)
    assert sample_size_linear(10, 0.05, 0.1, 4.0) == want
    assert sample_size_linear(2, 0.5, 10.0, 1e-9) == 1
    assert sample_size_nonlinear(2, 2, 0.05, 0.1, 2.0) == math.ceil(
        2.0 ** 4 * 2.0 / (0.05 * 0.1 ** 2)
    )
    with pytest.raises(ValueError):
        sample_size_linear(1, 0.05, 0.1, 1.0)
    with pytest.raises(ValueError):
        sample_size_linear(10, 1.5, 0.1, 1.0)
    with pytest.raises(ValueError):
        sample_size_linear(10, 0.05, 0.0, 1.0)
    with pytest.raises(ValueError):
        sample_size_nonlinear(0, 2, 0.05, 0.1, 1.0)
    with pytest.raises(ValueError):
        sample_size_nonlinear(2, 2, 0.05, 0.1, -1.0)


def test_weighted_shots_probabilities_sum_to_one():
    for plan in (plan_l1(OBS_A), plan_uniform_cs(2), plan_lbcs(OBS_A)):
        _, weights = weighted_shots(plan, RHO_A)
        assert weights.sum() == pytest.approx(1.0, abs=1e-10)
