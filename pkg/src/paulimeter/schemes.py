"""Measurement-plan construction for the five schemes.

A plan is the static object a measurement campaign runs from: either a
probability law over full-weight Pauli bases (importance sampling, grouping,
uniform or locally-biased randomized bases) or a fixed list of bases chosen
greedily (derandomization).  Plans are immutable; drawing bases from a
randomized plan is pure given the seed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateObservable, PlanMismatch
from .paulis import PauliString, WeightedPauliSum, compatible, hits

_PROB_TOL = 1e-10
_LBCS_FLOOR = 1e-6
# letter codes used throughout: 1=X, 2=Y, 3=Z
_XYZ = (1, 2, 3)


@dataclass(frozen=True)
class BasisDistribution:
    """Probability law over full-weight bases.

    Either an explicit finite list of (basis, probability) pairs, or a
    product law given by one probability triple (X, Y, Z) per qubit.
    """

    kind: str  # 'explicit' | 'product'
    explicit: Optional[tuple[tuple[PauliString, float], ...]] = None
    product: Optional[np.ndarray] = None  # shape (n, 3), columns X, Y, Z

    def __post_init__(self) -> None:
        if self.kind == "explicit":
            if not self.explicit:
                raise ValueError("explicit distribution needs at least one basis")
            probs = [p for _, p in self.explicit]
            if any(p <= 0 for p in probs):
                raise ValueError("explicit probabilities must be positive")
            if abs(sum(probs) - 1.0) > _PROB_TOL:
                raise ValueError(f"explicit probabilities sum to {sum(probs)}, not 1")
            if any(not b.is_full_weight for b, _ in self.explicit):
                raise ValueError("explicit bases must be full weight")
        elif self.kind == "product":
            q = self.product
            if q is None or q.ndim != 2 or q.shape[1] != 3:
                raise ValueError("product distribution needs an (n, 3) array")
            if np.any(q < 0):
                raise ValueError("product probabilities must be nonnegative")
            if np.max(np.abs(q.sum(axis=1) - 1.0)) > _PROB_TOL:
                raise ValueError("per-qubit triples must sum to 1")
            q.setflags(write=False)
        else:
            raise ValueError(f"unknown distribution kind {self.kind!r}")


@dataclass(frozen=True)
class MeasurementPlan:
    """A scheme's measurement prescription.

    ``terms`` records the observable terms the plan was built from; for
    explicit plans ``members`` maps each distribution entry to the indices
    of the terms it measures (a partition for grouping, near-singletons for
    importance sampling).  Derandomized plans instead carry the ordered
    ``fixed_bases`` and a warning list of term indices never hit.
    """

    scheme: str  # 'l1' | 'ldf' | 'cs' | 'lbcs' | 'derand'
    n: int
    terms: tuple[PauliString, ...] = ()
    distribution: Optional[BasisDistribution] = None
    members: Optional[tuple[tuple[int, ...], ...]] = None
    fixed_bases: Optional[tuple[PauliString, ...]] = None
    converged: Optional[bool] = None
    unhit_terms: tuple[int, ...] = ()

    @property
    def is_randomized(self) -> bool:
        return self.scheme != "derand"


@dataclass(frozen=True)
class GroupingReport:
    group_count: int
    weights: tuple[float, ...]  # per-group l1 weight ||e_j||_1
    bases: tuple[PauliString, ...]


def _z_first_fills(free_sites: tuple[int, ...]):
    """All completions of the free sites, Z-fill first, deterministic order."""
    for combo in itertools.product((3, 1, 2), repeat=len(free_sites)):
        yield dict(zip(free_sites, combo))


def _complete(term: PauliString, fill: dict[int, int]) -> PauliString:
    codes = term.codes().copy()
    for site, letter in fill.items():
        codes[site] = letter
    return PauliString.from_codes(codes)


def plan_l1(o: WeightedPauliSum) -> MeasurementPlan:
    """Importance sampling: draw term l with probability |alpha_l|/||alpha||_1.

    Each term is completed to a full-weight basis.  Completions are chosen
    to collide as rarely as possible (Z-fill, then deterministic alternate
    fills) so that distinct terms keep distinct plan entries and the
    single-shot estimator variance stays at the closed form
    ||alpha||_1^2 - Tr(O rho)^2.  When a term's completions are exhausted by
    other terms the term is merged into the entry holding its Z-fill and the
    entry measures both.
    """
    o.require_nonempty()
    norm = o.l1_norm
    entries: list[tuple[PauliString, float]] = []
    members: list[list[int]] = []
    claimed: dict[tuple[int, int], int] = {}
    for idx, (coeff, term) in enumerate(o):
        prob = abs(coeff) / norm
        free = tuple(i for i in range(o.n) if i not in term.support)
        chosen = None
        z_fill_key = None
        for fill in _z_first_fills(free):
            cand = _complete(term, fill)
            key = (cand.x, cand.z)
            if z_fill_key is None:
                z_fill_key = key
            if key not in claimed:
                chosen = (cand, key)
                break
        if chosen is not None:
            cand, key = chosen
            claimed[key] = len(entries)
            entries.append((cand, prob))
            members.append([idx])
        else:
            e = claimed[z_fill_key]
            basis, old = entries[e]
            entries[e] = (basis, old + prob)
            members[e].append(idx)
    dist = BasisDistribution("explicit", explicit=tuple(entries))
    return MeasurementPlan(
        scheme="l1",
        n=o.n,
        terms=o.paulis,
        distribution=dist,
        members=tuple(tuple(m) for m in members),
    )


def _fill_group_basis(o: WeightedPauliSum, member_idx: list[int], n: int) -> PauliString:
    """Sitewise union of member letters; free sites filled for extra hits.

    Each free site takes the letter carried there by the most outside terms
    still hittable by the basis built so far (candidates scanned Z, X, Y so
    ties fall to Z; sites with no candidate fall to Z too).
    """
    codes = np.zeros(n, dtype=np.int8)
    member_set = set(member_idx)
    for idx in member_idx:
        term_codes = o.paulis[idx].codes()
        codes = np.where(term_codes != 0, term_codes, codes)
    outside = [o.paulis[i].codes() for i in range(len(o)) if i not in member_set]
    alive = [True] * len(outside)
    for i in range(n):
        if codes[i] != 0:
            for t, tc in enumerate(outside):
                if alive[t] and tc[i] != 0 and tc[i] != codes[i]:
                    alive[t] = False
    for i in range(n):
        if codes[i] != 0:
            continue
        counts = {w: 0 for w in _XYZ}
        for t, tc in enumerate(outside):
            if alive[t] and tc[i] != 0:
                counts[tc[i]] += 1
        best = max((3, 1, 2), key=lambda w: counts[w])
        codes[i] = best
        for t, tc in enumerate(outside):
            if alive[t] and tc[i] != 0 and tc[i] != best:
                alive[t] = False
    return PauliString.from_codes(codes)


def plan_ldf(o: WeightedPauliSum, probabilities: str = "weight") -> tuple[MeasurementPlan, GroupingReport]:
    """Largest-degree-first grouping of qubit-wise compatible terms.

    Builds the incompatibility graph over terms, colors vertices greedily in
    nonincreasing degree order (ties broken by term index, each vertex taking
    the lowest class with no incompatible member), and turns each color class
    into a jointly measured group.  Group probabilities are proportional to
    the group's total |alpha| weight by default, or uniform over groups with
    ``probabilities="uniform"``.
    """
    if probabilities not in ("weight", "uniform"):
        raise ValueError(f"unknown probability rule {probabilities!r}")
    o.require_nonempty()
    L = len(o)
    adj = [[False] * L for _ in range(L)]
    for i in range(L):
        for j in range(i + 1, L):
            if not compatible(o.paulis[i], o.paulis[j]):
                adj[i][j] = adj[j][i] = True
    degrees = [sum(row) for row in adj]
    order = sorted(range(L), key=lambda v: (-degrees[v], v))
    groups: list[list[int]] = []
    for v in order:
        for grp in groups:
            if not any(adj[v][u] for u in grp):
                grp.append(v)
                break
        else:
            groups.append([v])
    bases = [_fill_group_basis(o, grp, o.n) for grp in groups]
    for grp, basis in zip(groups, bases):
        for idx in grp:
            assert hits(basis, o.paulis[idx]), f"group basis {basis} misses {o.paulis[idx]}"
    weights = [sum(abs(o.coeffs[i]) for i in grp) for grp in groups]
    if probabilities == "weight":
        total = sum(weights)
        probs = [w / total for w in weights]
    else:
        probs = [1.0 / len(groups)] * len(groups)
    dist = BasisDistribution("explicit", explicit=tuple(zip(bases, probs)))
    plan = MeasurementPlan(
        scheme="ldf",
        n=o.n,
        terms=o.paulis,
        distribution=dist,
        members=tuple(tuple(sorted(g)) for g in groups),
    )
    report = GroupingReport(len(groups), tuple(weights), tuple(bases))
    return plan, report


def plan_uniform_cs(n: int) -> MeasurementPlan:
    """Uniform product distribution, K_i = (1/3, 1/3, 1/3) on every qubit."""
    if n < 1:
        raise ValueError("n must be >= 1")
    q = np.full((n, 3), 1.0 / 3.0)
    return MeasurementPlan(scheme="cs", n=n, distribution=BasisDistribution("product", product=q))


def _lbcs_cost(o: WeightedPauliSum, q: np.ndarray) -> float:
    total = 0.0
    for coeff, term in o:
        val = coeff * coeff
        for i in term.support:
            val /= q[i, term.code(i) - 1]
        total += val
    return total


def plan_lbcs(o: WeightedPauliSum, max_sweeps: int = 200, tol: float = 1e-10) -> MeasurementPlan:
    """Locally biased product distribution.

    Minimizes the diagonal variance surrogate
    C(K) = sum_l alpha_l^2 prod_{i in supp(O_l)} 1/K_i(O_{l,i})
    by cyclic exact per-qubit minimization (the optimum of sum_W A_W/q_W on
    the simplex is q_W proportional to sqrt(A_W)) starting from uniform.
    Probabilities are floored at 1e-6 and renormalized so estimator kernels
    stay finite; qubits carried by no term keep the uniform triple.  A qubit
    update is kept only if it does not increase the cost, so the surrogate
    is nonincreasing across sweeps.  Stops when the relative improvement of
    a full sweep drops below ``tol``; if the sweep budget runs out first the
    best iterate is returned with ``converged=False``.
    """
    o.require_nonempty()
    if any(p.is_identity for p in o.paulis):
        raise DegenerateObservable("locally biased planning needs nonempty support on every term")
    n = o.n
    q = np.full((n, 3), 1.0 / 3.0)
    cost = _lbcs_cost(o, q)
    converged = False
    for _ in range(max_sweeps):
        before = cost
        for i in range(n):
            a = np.zeros(3)
            for coeff, term in o:
                if i not in term.support:
                    continue
                val = coeff * coeff
                for i2 in term.support:
                    if i2 != i:
                        val /= q[i2, term.code(i2) - 1]
                a[term.code(i) - 1] += val
            if not np.any(a > 0):
                continue
            cand = np.sqrt(a)
            cand /= cand.sum()
            cand = np.maximum(cand, _LBCS_FLOOR)
            cand /= cand.sum()
            old = q[i].copy()
            q[i] = cand
            new_cost = _lbcs_cost(o, q)
            if new_cost <= cost:
                cost = new_cost
            else:
                q[i] = old
        if before - cost < tol * before:
            converged = True
            break
    return MeasurementPlan(
        scheme="lbcs",
        n=n,
        terms=o.paulis,
        distribution=BasisDistribution("product", product=q),
        converged=converged,
    )


def derandomization_cost(
    o: WeightedPauliSum,
    epsilon: float,
    ns: int,
    complete: list[PauliString],
    partial: Optional[dict[int, int]] = None,
) -> float:
    """Confidence-bound surrogate F for a partially built derandomized plan.

    F = sum_l prod_j (1 - gamma p_{j,l}) with gamma = 1 - exp(-eps^2/2) and
    p_{j,l} the probability that measurement j hits term l when every
    still-unfixed letter is drawn uniformly from {X, Y, Z}: a completed
    measurement has p = 1 or 0, the measurement under construction
    multiplies matches over its fixed sites and 1/3 per unfixed support
    site, and each untouched future measurement contributes
    p = 3^{-|supp|}.  Affine in each letter slot, so the greedy minimum
    over a slot never exceeds the unfixed value.
    """
    gamma = 1.0 - math.exp(-epsilon * epsilon / 2.0)
    partial = partial or {}
    built = len(complete)
    total = 0.0
    for _, term in o:
        w = term.weight
        fac = 1.0
        for basis in complete:
            fac *= 1.0 - gamma * (1.0 if hits(basis, term) else 0.0)
        if built < ns:
            p = 1.0
            for i in term.support:
                if i in partial:
                    if partial[i] != term.code(i):
                        p = 0.0
                        break
                else:
                    p /= 3.0
            fac *= 1.0 - gamma * p
            fac *= (1.0 - gamma * 3.0 ** (-w)) ** (ns - built - 1)
        total += fac
    return total


def plan_derandomized(o: WeightedPauliSum, ns: int, epsilon: float = 0.9) -> MeasurementPlan:
    """Greedy derandomized basis selection.

    Walks measurement slots j = 1..ns and sites i = 1..n, fixing each letter
    to the choice in {X, Y, Z} that minimizes :func:`derandomization_cost`
    (ties broken X before Y before Z).  Because the cost is affine in each
    slot's letter distribution, every choice satisfies F_after <= F_before.
    Terms never hit by the finished plan are listed in ``unhit_terms``;
    their total weight is the initial bias the estimator reports.
    """
    if ns < 1:
        raise ValueError("ns must be >= 1")
    o.require_nonempty()
    if any(p.is_identity for p in o.paulis):
        raise DegenerateObservable("derandomization needs nonempty support on every term")
    gamma = 1.0 - math.exp(-epsilon * epsilon / 2.0)
    L = len(o)
    n = o.n
    codes = np.array([p.codes() for p in o.paulis])  # (L, n)
    supp = codes != 0
    w = supp.sum(axis=1)
    future_base = 1.0 - gamma * (3.0 ** (-w.astype(float)))

    c = np.ones(L)  # product over completed measurements
    hit_counts = np.zeros(L, dtype=np.int64)
    chosen = np.zeros((ns, n), dtype=np.int8)
    for j in range(ns):
        cur = np.ones(L)  # match product over fixed sites of measurement j
        r = w.astype(float).copy()  # unfixed support sites remaining
        fut = future_base ** (ns - j - 1)
        for i in range(n):
            affected = supp[:, i]
            if not np.any(affected):
                chosen[j, i] = 1  # letter is irrelevant; X by the tie rule
                continue
            base = c[affected] * fut[affected]
            cur_a = cur[affected]
            pow_rest = 3.0 ** (-(r[affected] - 1.0))
            best_letter = 0
            best_cost = math.inf
            for letter in _XYZ:
                match = (codes[affected, i] == letter).astype(float)
                cost = float(np.sum(base * (1.0 - gamma * cur_a * match * pow_rest)))
                if cost < best_cost:
                    best_cost = cost
                    best_letter = letter
            chosen[j, i] = best_letter
            cur[affected] *= (codes[affected, i] == best_letter).astype(float)
            r[affected] -= 1.0
        hits_j = cur  # r == 0 on every support site now
        hit_counts += hits_j.astype(np.int64)
        c *= 1.0 - gamma * hits_j
    bases = tuple(PauliString.from_codes(chosen[j]) for j in range(ns))
    unhit = tuple(int(i) for i in np.flatnonzero(hit_counts == 0))
    return MeasurementPlan(
        scheme="derand",
        n=n,
        terms=o.paulis,
        fixed_bases=bases,
        unhit_terms=unhit,
    )


def draw_bases(plan: MeasurementPlan, count: int, seed) -> list[PauliString]:
    """Draw ``count`` i.i.d. bases from a randomized plan, or return the
    fixed bases of a derandomized plan (count must match)."""
    if plan.scheme == "derand":
        if count != len(plan.fixed_bases):
            raise PlanMismatch(f"derandomized plan holds {len(plan.fixed_bases)} bases, not {count}")
        return list(plan.fixed_bases)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dist = plan.distribution
    if dist.kind == "explicit":
        probs = np.array([p for _, p in dist.explicit])
        idx = np.searchsorted(np.cumsum(probs), rng.random(count), side="right")
        idx = np.minimum(idx, len(probs) - 1)
        return [dist.explicit[i][0] for i in idx]
    q = dist.product
    n = plan.n
    letters = np.empty((count, n), dtype=np.int8)
    for i in range(n):
        cum = np.cumsum(q[i])
        col = np.searchsorted(cum, rng.random(count), side="right")
        letters[:, i] = np.minimum(col, 2) + 1
    return [PauliString.from_codes(letters[k]) for k in range(count)]


def draw_basis(plan: MeasurementPlan, index_or_seed) -> PauliString:
    """Single-basis access: fixed index for derandomized plans, seeded draw
    for randomized ones."""
    if plan.scheme == "derand":
        index = int(index_or_seed)
        if not 0 <= index < len(plan.fixed_bases):
            raise PlanMismatch(f"index {index} outside the {len(plan.fixed_bases)} fixed bases")
        return plan.fixed_bases[index]
    return draw_bases(plan, 1, index_or_seed)[0]
