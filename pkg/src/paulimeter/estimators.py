"""The unified estimator, its derandomized variant, and analytic variances.

One measurement shot in basis P with outcome bits b contributes

    o_hat(P, b) = sum_l alpha_l f(P, O_l, K) mu(b, supp(O_l))

where mu is the product of the +-1 site eigenvalues over the term's support
and f is the scheme's kernel: inverse entry probability times a membership
indicator for the explicit schemes (importance sampling, grouping), and the
factorized product kernel prod_i (delta_{Q_i,I} + K_i(P_i)^{-1} delta_{Q_i,P_i})
for the product schemes (uniform and locally biased randomized bases).  The
probability-weighted average of o_hat over bases and outcomes is exactly
Tr(O rho) for every scheme; the analytic variance calculators below give the
single-shot variance of the same estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CoverageError,
    DimensionMismatch,
    EmptyInput,
    ForeignRecord,
    PlanMismatch,
)
from .paulis import PauliString, WeightedPauliSum, compatible, hits, multiply
from .schemes import BasisDistribution, MeasurementPlan
from .states import DensityMatrix, exact_expectation


@dataclass(frozen=True)
class ShotRecord:
    """One measurement event: full-weight basis, outcome bits, multiplicity.

    ``reps`` counts coincidences: a record with reps=r stands for r unit
    shots that produced the same basis and the same outcome.
    """

    basis: PauliString
    bits: tuple[int, ...]
    reps: int = 1

    def __post_init__(self) -> None:
        if not self.basis.is_full_weight:
            raise ValueError(f"record basis {self.basis} contains identity letters")
        if len(self.bits) != self.basis.n:
            raise ValueError(f"{len(self.bits)} bits for an n={self.basis.n} basis")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


@dataclass(frozen=True)
class EstimateReport:
    """Estimator output: value, shot count, per-term hit counts, and the
    initial-bias bound epsilon_0 = sum of |alpha_l| over terms never hit."""

    value: float
    n_samples: int
    s_l: tuple[int, ...]
    epsilon0: float


def records_from_samples(basis: PauliString, bits: np.ndarray) -> list[ShotRecord]:
    """Fold sampled outcome rows for one basis setting into records,
    grouping equal outcomes into the reps count."""
    counts: dict[tuple[int, ...], int] = {}
    order: list[tuple[int, ...]] = []
    for row in bits:
        key = tuple(int(b) for b in row)
        if key not in counts:
            counts[key] = 0
            order.append(key)
        counts[key] += 1
    return [ShotRecord(basis, key, counts[key]) for key in order]


class _Prepared:
    """Records unpacked into arrays: one row per record (reps kept as
    weights, not expanded)."""

    __slots__ = ("codes", "bits", "reps", "total", "n")

    def __init__(self, records: list[ShotRecord], n: int):
        if not records:
            raise EmptyInput("no records to estimate from")
        for r in records:
            if r.basis.n != n:
                raise DimensionMismatch(f"record basis {r.basis} does not fit n={n}")
        self.n = n
        self.codes = np.array([r.basis.codes() for r in records], dtype=np.int8)
        self.bits = np.array([r.bits for r in records], dtype=np.uint8)
        self.reps = np.array([r.reps for r in records], dtype=float)
        self.total = float(self.reps.sum())

    def mu(self, term: PauliString) -> np.ndarray:
        """mu(b, supp(term)) = (-1)^(number of 1-bits on the support)."""
        idx = list(term.support)
        if not idx:
            return np.ones(len(self.bits))
        parity = self.bits[:, idx].sum(axis=1) & 1
        return 1.0 - 2.0 * parity.astype(float)

    def hit_mask(self, term: PauliString) -> np.ndarray:
        """Rows whose basis hits the term."""
        out = np.ones(len(self.codes), dtype=bool)
        for i in term.support:
            out &= self.codes[:, i] == term.code(i)
        return out


def _entry_ids(prep: _Prepared, records: list[ShotRecord], dist: BasisDistribution) -> np.ndarray:
    lookup = {(b.x, b.z): e for e, (b, _) in enumerate(dist.explicit)}
    ids = np.empty(len(records), dtype=np.int64)
    for k, r in enumerate(records):
        key = (r.basis.x, r.basis.z)
        if key not in lookup:
            raise ForeignRecord(f"basis {r.basis} is not an entry of the plan")
        ids[k] = lookup[key]
    return ids


def _check_fixed_alignment(records: list[ShotRecord], fixed_bases: tuple[PauliString, ...]) -> None:
    """Records must cover the planned settings in order: either one record
    per setting, or a constant number per setting (repeated measurements of
    each setting, written consecutively)."""
    nb = len(fixed_bases)
    if nb == 0 or len(records) % nb != 0:
        raise PlanMismatch(f"{len(records)} records do not cover {nb} planned settings evenly")
    nr = len(records) // nb
    for k, b in enumerate(fixed_bases):
        for r in records[k * nr : (k + 1) * nr]:
            if (r.basis.x, r.basis.z) != (b.x, b.z):
                raise ForeignRecord(f"record basis {r.basis} does not match planned basis {b} (setting {k})")


def _match_terms(o: WeightedPauliSum, plan: MeasurementPlan) -> list[int | None]:
    """Index of each observable term inside the plan's term list (None if
    the plan was built without it)."""
    lookup = {(p.x, p.z): i for i, p in enumerate(plan.terms)}
    return [lookup.get((p.x, p.z)) for p in o.paulis]


def _entry_of_term(plan: MeasurementPlan) -> dict[int, int]:
    out: dict[int, int] = {}
    for e, member in enumerate(plan.members):
        for t in member:
            out[t] = e
    return out


def per_shot_estimates(records: list[ShotRecord], plan: MeasurementPlan, o: WeightedPauliSum) -> np.ndarray:
    """o_hat for every record (in record order; reps NOT expanded)."""
    if not plan.is_randomized:
        raise PlanMismatch("per-shot estimation applies to randomized plans; use estimate_derandomized")
    if o.n != plan.n:
        raise DimensionMismatch(f"observable n={o.n}, plan n={plan.n}")
    prep = _Prepared(records, plan.n)
    dist = plan.distribution
    values = np.zeros(len(records))
    if dist.kind == "explicit":
        ids = _entry_ids(prep, records, dist)
        owner = _entry_of_term(plan)
        probs = [p for _, p in dist.explicit]
        for coeff, term, plan_idx in zip(o.coeffs, o.paulis, _match_terms(o, plan)):
            if plan_idx is None or plan_idx not in owner:
                continue
            e = owner[plan_idx]
            sel = ids == e
            if np.any(sel):
                values[sel] += coeff / probs[e] * prep.mu(term)[sel]
        return values
    q = dist.product
    for coeff, term in o:
        kernel = coeff
        for i in term.support:
            kernel /= q[i, term.code(i) - 1]
        sel = prep.hit_mask(term)
        if np.any(sel):
            values[sel] += kernel * prep.mu(term)[sel]
    return values


def per_term_expectations(
    records: list[ShotRecord], plan: MeasurementPlan, o: WeightedPauliSum
) -> tuple[np.ndarray, np.ndarray]:
    """Per-term estimates of <O_l> (coefficients not applied) and the
    weighted hit counts s_l, under any plan kind.

    For randomized plans a term's estimate is the all-shots mean of its
    kernel contribution; for fixed-bases plans it is the signed-outcome
    average over hitting shots (0.0 when never hit, flagged by s_l = 0).
    """
    if o.n != plan.n:
        raise DimensionMismatch(f"observable n={o.n}, plan n={plan.n}")
    prep = _Prepared(records, plan.n)
    L = len(o)
    vals = np.zeros(L)
    s_l = np.zeros(L)
    if plan.scheme == "derand":
        _check_fixed_alignment(records, plan.fixed_bases)
        for l, (_, term) in enumerate(o):
            sel = prep.hit_mask(term)
            s = float(prep.reps[sel].sum())
            s_l[l] = s
            if s > 0:
                vals[l] = float(np.dot(prep.mu(term)[sel], prep.reps[sel])) / s
        return vals, s_l
    dist = plan.distribution
    if dist.kind == "explicit":
        ids = _entry_ids(prep, records, dist)
        owner = _entry_of_term(plan)
        probs = [p for _, p in dist.explicit]
        for l, (term, plan_idx) in enumerate(zip(o.paulis, _match_terms(o, plan))):
            if plan_idx is None or plan_idx not in owner:
                continue
            e = owner[plan_idx]
            sel = ids == e
            s_l[l] = float(prep.reps[sel].sum())
            if np.any(sel):
                vals[l] = float(np.dot(prep.mu(term)[sel], prep.reps[sel])) / (probs[e] * prep.total)
        return vals, s_l
    q = dist.product
    for l, (_, term) in enumerate(o):
        kernel = 1.0
        for i in term.support:
            kernel /= q[i, term.code(i) - 1]
        sel = prep.hit_mask(term)
        s_l[l] = float(prep.reps[sel].sum())
        if np.any(sel):
            vals[l] = kernel * float(np.dot(prep.mu(term)[sel], prep.reps[sel])) / prep.total
    return vals, s_l


def estimate(
    records: list[ShotRecord],
    plan: MeasurementPlan,
    o: WeightedPauliSum,
    aggregator: str = "mean",
    batches: int = 10,
) -> EstimateReport:
    """Mean of o_hat over all shots under a randomized plan.

    A record with reps=r contributes as r unit shots.  ``aggregator`` may be
    "mean" (default) or "medianmeans", which splits the records into
    ``batches`` consecutive batches and takes the median of the batch means.
    Terms the dataset never hit are reported through s_l and epsilon0; their
    zero contributions stay in the mean, which is what keeps it unbiased.
    """
    values = per_shot_estimates(records, plan, o)
    reps = np.array([r.reps for r in records], dtype=float)
    total = float(reps.sum())
    if aggregator == "mean":
        value = math.fsum(v * w for v, w in zip(values, reps)) / total
    elif aggregator == "medianmeans":
        if batches < 1:
            raise ValueError("batches must be >= 1")
        edges = np.linspace(0, len(records), min(batches, len(records)) + 1).astype(int)
        means = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            wsum = reps[lo:hi].sum()
            means.append(math.fsum(v * w for v, w in zip(values[lo:hi], reps[lo:hi])) / wsum)
        value = float(np.median(means))
    else:
        raise ValueError(f"unknown aggregator {aggregator!r}")
    _, s_l = per_term_expectations(records, plan, o)
    eps0 = math.fsum(abs(c) for c, s in zip(o.coeffs, s_l) if s == 0)
    return EstimateReport(float(value), int(total), tuple(int(s) for s in s_l), eps0)


def estimate_derandomized(records: list[ShotRecord], plan: MeasurementPlan, o: WeightedPauliSum) -> EstimateReport:
    """Estimator for a fixed-bases plan.

    Every term averages its signed outcomes over all shots whose basis hits
    it (s_l = total hit count, reps included); terms never hit are excluded
    from the value and accumulate the initial bias epsilon0.
    """
    if plan.scheme != "derand":
        raise PlanMismatch("plan does not carry fixed bases")
    vals, s_l = per_term_expectations(records, plan, o)
    value = math.fsum(c * v for c, v, s in zip(o.coeffs, vals, s_l) if s > 0)
    eps0 = math.fsum(abs(c) for c, s in zip(o.coeffs, s_l) if s == 0)
    total = int(sum(r.reps for r in records))
    return EstimateReport(float(value), total, tuple(int(s) for s in s_l), eps0)


def _pair_trace_cache(rho: DensityMatrix):
    cache: dict[tuple[int, int], float] = {}

    def tr(pauli: PauliString, phase: complex) -> float:
        key = (pauli.x, pauli.z)
        if key not in cache:
            cache[key] = float(np.real(np.einsum("ij,ji->", rho.mat, pauli.to_matrix())))
        val = phase * cache[key]
        if abs(val.imag) > 1e-10:
            raise AssertionError("pair trace came out complex")
        return float(val.real)

    return tr


def variance_l1(o: WeightedPauliSum, rho: DensityMatrix) -> float:
    """Single-shot variance of importance sampling: ||alpha||_1^2 - Tr(O rho)^2."""
    if o.n != rho.n:
        raise DimensionMismatch(f"observable n={o.n}, state n={rho.n}")
    mean = exact_expectation(rho, o)
    return o.l1_norm ** 2 - mean ** 2


def variance_grouping(plan: MeasurementPlan, o: WeightedPauliSum, rho: DensityMatrix) -> float:
    """Single-shot variance of a membership plan:
    sum_j K(P_j)^{-1} sum_{l,l' in S_j} alpha_l alpha_l' Tr(rho O_l O_l') - Tr(O rho)^2."""
    if plan.distribution is None or plan.distribution.kind != "explicit" or plan.members is None:
        raise PlanMismatch("variance_grouping needs an explicit plan with group membership")
    if o.n != rho.n or o.n != plan.n:
        raise DimensionMismatch("sizes differ")
    matched = _match_terms(o, plan)
    by_plan_idx: dict[int, int] = {}
    for o_idx, plan_idx in enumerate(matched):
        if plan_idx is None:
            raise CoverageError(f"term {o.paulis[o_idx]} is not part of the plan")
        by_plan_idx[plan_idx] = o_idx
    tr = _pair_trace_cache(rho)
    probs = [p for _, p in plan.distribution.explicit]
    total = 0.0
    for e, member in enumerate(plan.members):
        inside = [by_plan_idx[t] for t in member if t in by_plan_idx]
        for li in inside:
            for lj in inside:
                prod = multiply(o.paulis[li], o.paulis[lj])
                total += o.coeffs[li] * o.coeffs[lj] * tr(prod.pauli, prod.phase) / probs[e]
    mean = exact_expectation(rho, o)
    return total - mean ** 2


def variance_product_scheme(
    dist: BasisDistribution, o: WeightedPauliSum, rho: DensityMatrix
) -> tuple[float, float]:
    """Exact single-shot variance of a product-distribution scheme plus the
    closed-form bound 3^(max_l |supp(O_l)|) (sum_l |alpha_l|)^2.

    The exact value uses the sitewise expectation of the kernel product:
    E[f_l f_l'] is zero for incompatible term pairs and otherwise the product
    of 1/K_i(W) over the shared support (letters agree there), since kernels
    and the basis law both factorize per site.
    """
    if dist.kind != "product":
        raise PlanMismatch("variance_product_scheme needs a product distribution")
    if o.n != rho.n:
        raise DimensionMismatch("sizes differ")
    q = dist.product
    tr = _pair_trace_cache(rho)
    total = 0.0
    for ci, pi in o:
        for cj, pj in o:
            if not compatible(pi, pj):
                continue
            shared = set(pi.support) & set(pj.support)
            weight = 1.0
            for i in shared:
                weight /= q[i, pi.code(i) - 1]
            prod = multiply(pi, pj)
            total += ci * cj * weight * tr(prod.pauli, prod.phase)
    mean = exact_expectation(rho, o)
    max_supp = max((p.weight for p in o.paulis), default=0)
    bound = (3.0 ** max_supp) * o.l1_norm ** 2
    return total - mean ** 2, bound


def variance_generic(plan: MeasurementPlan, o: WeightedPauliSum, rho: DensityMatrix) -> float:
    """Variance of the generic hit-based scheme over an explicit basis list:
    Var = sum_{l,l'} alpha_l alpha_l' g(O_l, O_l') Tr(rho O_l O_l') - Tr(O rho)^2
    with g = [sum_{P hits O_l} K]^{-1} [sum_{P hits O_l'} K]^{-1} sum_{P hits both} K."""
    if plan.distribution is None or plan.distribution.kind != "explicit":
        raise PlanMismatch("variance_generic needs an explicit basis list")
    if o.n != rho.n or o.n != plan.n:
        raise DimensionMismatch("sizes differ")
    entries = plan.distribution.explicit
    hit_prob = []
    hit_sets = []
    for term in o.paulis:
        hs = np.array([hits(b, term) for b, _ in entries])
        prob = math.fsum(p for (_, p), h in zip(entries, hs) if h)
        if prob == 0.0:
            raise CoverageError(f"term {term} is hit by no basis of the plan")
        hit_prob.append(prob)
        hit_sets.append(hs)
    tr = _pair_trace_cache(rho)
    total = 0.0
    for li, (ci, pi) in enumerate(o):
        for lj, (cj, pj) in enumerate(o):
            both = hit_sets[li] & hit_sets[lj]
            if not np.any(both):
                continue
            joint = math.fsum(p for (_, p), h in zip(entries, both) if h)
            g = joint / (hit_prob[li] * hit_prob[lj])
            prod = multiply(pi, pj)
            total += ci * cj * g * tr(prod.pauli, prod.phase)
    mean = exact_expectation(rho, o)
    return total - mean ** 2


def sample_size_linear(L: int, delta: float, epsilon: float, max_var: float) -> int:
    """N_s >= 2 log(L) log(1/delta) max_var / epsilon^2, floored at 1."""
    if L < 2:
        raise ValueError("L must be >= 2")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if max_var < 0.0:
        raise ValueError("max_var must be nonnegative")
    bound = 2.0 * math.log(L) * math.log(1.0 / delta) * max_var / (epsilon * epsilon)
    return max(1, math.ceil(bound))


def sample_size_nonlinear(subsys_size: int, order: int, delta: float, epsilon: float, trace_o_sq: float) -> int:
    """N_s >= 2^(order * |AB|) Tr(O^2) / (delta epsilon^2), floored at 1."""
    if subsys_size < 1 or order < 1:
        raise ValueError("subsystem size and order must be >= 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if trace_o_sq < 0.0:
        raise ValueError("trace_o_sq must be nonnegative")
    bound = (2.0 ** (order * subsys_size)) * trace_o_sq / (delta * epsilon * epsilon)
    return max(1, math.ceil(bound))
