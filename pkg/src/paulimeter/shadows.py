"""Classical-shadow snapshots and the nonlinear-function estimators.

A single shot in full-weight basis W with outcome bits b yields the unbiased
state estimate rho_hat = prod_i (I + 3 s_i W_i)/2 with s_i = (-1)^{b_i}.
Purity and partial-transpose moments are U-statistics over distinct
snapshot tuples; because every snapshot factorizes over qubits, full tuple
sums reduce to traces of powers of T_m = sum_k M_k^m, which brings the cost
from N^order down to N:

    sum_{a!=b}      Tr[M_a M_b]     = Tr[T1^2] - Tr[T2]
    sum_{a!=b!=c}   Tr[M_a M_b M_c] = Tr[T1^3] - 3 Tr[T2 T1] + 2 Tr[T3]

M_k is the snapshot restricted to the relevant sites (transposed on the
partially-transposed block for PT-moments), and M_k^m is itself a tensor
product of 2x2 factor powers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    FeasibilityError,
    InvalidBasis,
)
from .paulis import PauliString, WeightedPauliSum
from .states import DensityMatrix, SubsystemMask, sample_outcomes

_PAULI_2X2 = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)

# factor (I + 3 s W)/2 indexed by [letter code - 1][0 if s=+1 else 1]
_FACTOR = np.empty((3, 2, 2, 2), dtype=complex)
for _c in range(3):
    for _k, _s in enumerate((1.0, -1.0)):
        _FACTOR[_c, _k] = (np.eye(2) + 3.0 * _s * _PAULI_2X2[_c]) / 2.0

# purity feature map: <phi(k), phi(k')> equals the closed-form pair trace
# 5 / -4 / 0.5, so pair sums become squared norms of summed features
_PHI = np.zeros((3, 2, 4))
for _c in range(3):
    for _k, _s in enumerate((1.0, -1.0)):
        _PHI[_c, _k, 0] = 1.0 / math.sqrt(2.0)
        _PHI[_c, _k, 1 + _c] = 3.0 * _s / math.sqrt(2.0)

_MAX_DENSE_QUBITS = 10
_MC_CHUNK = 1 << 16

# Z-axis images of the 24 single-qubit Cliffords: each signed Pauli axis
# appears exactly four times, so uniform sampling over the group induces the
# same snapshot law as uniform (letter, sign) sampling
_CLIFFORD24_Z_IMAGE = tuple(
    (code, sign) for code in (1, 2, 3) for sign in (1, -1) for _ in range(4)
)


@dataclass(frozen=True)
class Snapshot:
    """Single-shot state estimate: per-qubit trace-1 factors with
    eigenvalues {2, -1}, plus the (basis, bits) that produced them."""

    basis: PauliString
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.basis.is_full_weight:
            raise InvalidBasis(f"snapshot basis {self.basis} contains identity letters")
        if len(self.bits) != self.basis.n:
            raise DimensionMismatch(f"{len(self.bits)} bits for an n={self.basis.n} basis")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")
        for f in self.factors:
            if abs(np.trace(f).real - 1.0) > 1e-12:
                raise AssertionError("snapshot factor trace is not 1")
            ev = np.sort(np.linalg.eigvalsh(f))
            if abs(ev[0] + 1.0) > 1e-12 or abs(ev[1] - 2.0) > 1e-12:
                raise AssertionError("snapshot factor eigenvalues are not {2, -1}")

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def factors(self) -> list[np.ndarray]:
        """(I + 3 s_i W_i)/2 per site, s_i = (-1)^{bit_i}."""
        return [_FACTOR[self.basis.code(i) - 1, self.bits[i]] for i in range(self.n)]

    def to_matrix(self) -> np.ndarray:
        out = np.array([[1.0 + 0.0j]])
        for f in self.factors:
            out = np.kron(out, f)
        return out


def snapshot(basis: PauliString, bits) -> Snapshot:
    return Snapshot(basis, tuple(int(b) for b in bits))


class ShadowSet:
    """Ordered snapshot collection stored as (letter, sign) arrays.

    ``letters[k, i]`` is the measured Pauli letter code (1=X, 2=Y, 3=Z) on
    site i of snapshot k; ``signs[k, i]`` is the outcome eigenvalue +-1.
    ``seed_info`` records how the set was generated.
    """

    def __init__(self, n: int, letters: np.ndarray, signs: np.ndarray, seed_info: str = ""):
        letters = np.asarray(letters, dtype=np.int8)
        signs = np.asarray(signs, dtype=np.int8)
        if letters.ndim != 2 or letters.shape[1] != n or letters.shape != signs.shape:
            raise DimensionMismatch("letters and signs must both be (N, n)")
        if letters.size and (letters.min() < 1 or letters.max() > 3):
            raise ValueError("letter codes must be 1, 2 or 3")
        if signs.size and not np.all(np.abs(signs) == 1):
            raise ValueError("signs must be +-1")
        self.n = n
        self.letters = letters
        self.signs = signs
        self.seed_info = seed_info

    def __len__(self) -> int:
        return len(self.letters)

    def __getitem__(self, k: int) -> Snapshot:
        basis = PauliString.from_codes(self.letters[k].tolist())
        bits = tuple(int(s < 0) for s in self.signs[k])
        return Snapshot(basis, bits)

    @classmethod
    def from_records(cls, records, n: int, seed_info: str = "") -> "ShadowSet":
        """Expand shot records (reps included) into one snapshot per shot."""
        letters = []
        signs = []
        for r in records:
            if r.basis.n != n:
                raise DimensionMismatch(f"record basis {r.basis} does not fit n={n}")
            row_l = r.basis.codes()
            row_s = np.array([1 - 2 * b for b in r.bits], dtype=np.int8)
            for _ in range(r.reps):
                letters.append(row_l)
                signs.append(row_s)
        if not letters:
            raise EmptyInput("no records to build shadows from")
        return cls(n, np.array(letters), np.array(signs), seed_info)

    def records(self):
        """Serialize as one shot record per snapshot (lossless)."""
        from .estimators import ShotRecord

        out = []
        for k in range(len(self)):
            basis = PauliString.from_codes(self.letters[k].tolist())
            bits = tuple(int(s < 0) for s in self.signs[k])
            out.append(ShotRecord(basis, bits))
        return out


def collect_shadows(rho: DensityMatrix, ns: int, seed, mode: str = "pauli") -> ShadowSet:
    """Simulate ns uniform-ensemble snapshots of rho.

    mode "pauli" draws an independent uniform letter per qubit; mode
    "clifford24" draws uniformly from the single-qubit Clifford group,
    represented by each element's image of the Z axis.  The axis sign
    cancels out of the snapshot (it flips the outcome bit and the factor
    orientation together), so both modes induce the same snapshot law.
    """
    if ns < 1:
        raise ValueError("ns must be >= 1")
    if mode not in ("pauli", "clifford24"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    n = rho.n
    if mode == "pauli":
        letters = rng.integers(1, 4, size=(ns, n), dtype=np.int8)
    else:
        picks = rng.integers(0, 24, size=(ns, n))
        table = np.array(_CLIFFORD24_Z_IMAGE, dtype=np.int8)
        letters = table[picks, 0]
    signs = np.empty((ns, n), dtype=np.int8)
    sub = np.random.SeedSequence(seed).spawn(ns)
    for k in range(ns):
        basis = PauliString.from_codes(letters[k].tolist())
        bits = sample_outcomes(rho, basis, 1, sub[k])[0]
        signs[k] = 1 - 2 * bits.astype(np.int8)
    return ShadowSet(n, letters, signs, seed_info=f"mode={mode} seed={seed} ns={ns}")


def _require(shadows: ShadowSet, least: int, what: str) -> int:
    count = len(shadows)
    if count < least:
        raise EmptyInput(f"{what} needs at least {least} snapshots, got {count}")
    return count


def _site_factors(shadows: ShadowSet, sites, transpose_sites=frozenset()) -> np.ndarray:
    """(N, len(sites), 2, 2) factor array, transposed on the given sites."""
    cols = []
    for i in sites:
        f = _FACTOR[shadows.letters[:, i] - 1, (shadows.signs[:, i] < 0).astype(int)]
        if i in transpose_sites:
            f = f.transpose(0, 2, 1)
        cols.append(f)
    return np.stack(cols, axis=1)


def _kron_rows(mats: np.ndarray) -> np.ndarray:
    """Row-wise tensor product: (C, m, 2, 2) -> (C, 2^m, 2^m)."""
    out = mats[:, 0]
    for j in range(1, mats.shape[1]):
        c, d, _ = out.shape
        out = np.einsum("kab,kcd->kacbd", out, mats[:, j]).reshape(c, 2 * d, 2 * d)
    return out


def reconstruct_mean(shadows: ShadowSet) -> np.ndarray:
    """Arithmetic mean of the expanded snapshots. Trace is exactly 1; the
    matrix is generally not positive semidefinite and is returned as-is."""
    count = _require(shadows, 1, "reconstruction")
    if shadows.n > _MAX_DENSE_QUBITS:
        raise FeasibilityError(f"dense reconstruction limited to {_MAX_DENSE_QUBITS} qubits")
    dim = 2 ** shadows.n
    total = np.zeros((dim, dim), dtype=complex)
    factors = _site_factors(shadows, range(shadows.n))
    chunk = max(1, (1 << 21) // (dim * dim))
    for lo in range(0, count, chunk):
        total += _kron_rows(factors[lo : lo + chunk]).sum(axis=0)
    return total / count


def estimate_observable_from_shadows(shadows: ShadowSet, o: WeightedPauliSum) -> float:
    """Mean of Tr(rho_hat O), evaluated factor-wise: a term contributes
    3^|supp| times the product of its outcome signs whenever every support
    letter matches, which is identical to the uniform-basis kernel path."""
    count = _require(shadows, 1, "observable estimation")
    if o.n != shadows.n:
        raise DimensionMismatch(f"observable n={o.n}, shadows n={shadows.n}")
    total = 0.0
    for coeff, term in o:
        idx = list(term.support)
        if not idx:
            total += coeff
            continue
        want = np.array([term.code(i) for i in idx], dtype=np.int8)
        hit = np.all(shadows.letters[:, idx] == want, axis=1)
        if not np.any(hit):
            continue
        prod_signs = shadows.signs[hit][:, idx].prod(axis=1).astype(float)
        total += coeff * (3.0 ** len(idx)) * float(prod_signs.sum()) / count
    return total


def _phi_rows(shadows: ShadowSet, sites) -> np.ndarray:
    """(N, m, 4) purity feature vectors."""
    cols = [
        _PHI[shadows.letters[:, i] - 1, (shadows.signs[:, i] < 0).astype(int)]
        for i in sites
    ]
    return np.stack(cols, axis=1)


def purity_ustat(shadows: ShadowSet, a: SubsystemMask) -> float:
    """U-statistic for Tr(rho_A^2) over ordered distinct snapshot pairs.

    The per-qubit pair trace is 5 (same basis, same outcome), -4 (same
    basis, opposite outcome) or 1/2 (different bases); these closed forms
    enter through a feature map whose inner products reproduce them, so the
    pair sum is a squared norm and the cost is linear in the snapshot count.
    """
    count = _require(shadows, 2, "purity estimation")
    if a.n != shadows.n:
        raise DimensionMismatch(f"mask n={a.n}, shadows n={shadows.n}")
    sites = a.indices
    if not sites:
        raise ValueError("subsystem mask is empty")
    m = len(sites)
    if 4 ** m <= 1 << 22:
        dim = 4 ** m
        t1 = np.zeros(dim)
        chunk = max(1, (1 << 22) // dim)
        phi = _phi_rows(shadows, sites)
        for lo in range(0, count, chunk):
            rows = phi[lo : lo + chunk]
            out = rows[:, 0]
            for j in range(1, m):
                c, d = out.shape
                out = np.einsum("kd,ke->kde", out, rows[:, j]).reshape(c, 4 * d)
            t1 += out.sum(axis=0)
        pair_sum = float(t1 @ t1) - count * 5.0 ** m
    else:
        # mask too wide for the feature accumulator: pairwise table instead
        pair = np.ones((count, count))
        for i in sites:
            same_w = shadows.letters[:, i : i + 1] == shadows.letters[:, i]
            same_s = shadows.signs[:, i : i + 1] == shadows.signs[:, i]
            pair *= np.where(same_w, np.where(same_s, 5.0, -4.0), 0.5)
        pair_sum = float(pair.sum()) - count * 5.0 ** m
    return pair_sum / (count * (count - 1))


def _parse_strategy(strategy: str) -> tuple[str, int]:
    if strategy == "full":
        return "full", 0
    if strategy.startswith("mc:"):
        try:
            budget = int(strategy[3:])
        except ValueError:
            raise ValueError(f"bad strategy {strategy!r}") from None
        if budget < 1:
            raise ValueError("montecarlo budget must be >= 1")
        return "mc", budget
    raise ValueError(f"unknown strategy {strategy!r}; expected 'full' or 'mc:<budget>'")


def pt_moment_ustat(
    shadows: ShadowSet,
    a: SubsystemMask,
    order: int = 2,
    strategy: str = "full",
    seed=0,
) -> float:
    """U-statistic for Tr[(rho^{T_A})^order], order 2 or 3.

    strategy "full" evaluates the sum over all ordered distinct tuples
    exactly through power sums of the per-snapshot matrices (transposed on
    the masked sites); "mc:<budget>" averages over uniformly sampled
    distinct ordered tuples, deterministic for a fixed seed.  Sampled tuple
    values can carry an imaginary part; it cancels in expectation between a
    tuple and its reversal and is dropped.
    """
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    count = _require(shadows, order, "PT-moment estimation")
    if a.n != shadows.n:
        raise DimensionMismatch(f"mask n={a.n}, shadows n={shadows.n}")
    kind, budget = _parse_strategy(strategy)
    tsites = frozenset(a.indices)
    n = shadows.n
    if kind == "full":
        if n > _MAX_DENSE_QUBITS:
            raise FeasibilityError(
                f"full tuple sums build 2^n matrices and are limited to n <= {_MAX_DENSE_QUBITS}; use 'mc:<budget>'"
            )
        factors = _site_factors(shadows, range(n), tsites)
        dim = 2 ** n
        powers = [factors]
        sq = np.einsum("kjab,kjbc->kjac", factors, factors)
        powers.append(sq)
        if order == 3:
            powers.append(np.einsum("kjab,kjbc->kjac", sq, factors))
        t = []
        chunk = max(1, (1 << 21) // (dim * dim))
        for p in powers:
            acc = np.zeros((dim, dim), dtype=complex)
            for lo in range(0, count, chunk):
                acc += _kron_rows(p[lo : lo + chunk]).sum(axis=0)
            t.append(acc)
        if order == 2:
            raw = np.trace(t[0] @ t[0]) - np.trace(t[1])
            denom = count * (count - 1)
        else:
            raw = (
                np.trace(t[0] @ t[0] @ t[0])
                - 3.0 * np.trace(t[1] @ t[0])
                + 2.0 * np.trace(t[2])
            )
            denom = count * (count - 1) * (count - 2)
        if abs(raw.imag) > 1e-8 * max(1.0, abs(raw.real)):
            raise AssertionError("tuple power sum came out complex")
        return float(raw.real) / denom
    factors = _site_factors(shadows, range(n), tsites)
    rng = np.random.default_rng(seed)
    remaining = budget
    partials = []
    while remaining > 0:
        draw = rng.integers(0, count, size=(_MC_CHUNK, order))
        if order == 2:
            ok = draw[:, 0] != draw[:, 1]
        else:
            ok = (
                (draw[:, 0] != draw[:, 1])
                & (draw[:, 1] != draw[:, 2])
                & (draw[:, 0] != draw[:, 2])
            )
        draw = draw[ok][:remaining]
        if len(draw) == 0:
            continue
        prod = np.einsum("kjab,kjbc->kjac", factors[draw[:, 0]], factors[draw[:, 1]])
        if order == 3:
            prod = np.einsum("kjab,kjbc->kjac", prod, factors[draw[:, 2]])
        traces = prod[:, :, 0, 0] + prod[:, :, 1, 1]
        partials.append(float(traces.prod(axis=1).real.sum()))
        remaining -= len(draw)
    return math.fsum(partials) / budget


def p3_ppt_certificate(shadows: ShadowSet, a: SubsystemMask, strategy: str = "full", seed=0) -> dict:
    """Moment-based entanglement witness: the state must be entangled
    across the mask cut when p2^2 > p3."""
    p2 = pt_moment_ustat(shadows, a, 2, strategy, seed)
    p3 = pt_moment_ustat(shadows, a, 3, strategy, seed)
    margin = p2 * p2 - p3
    return {"p2": p2, "p3": p3, "margin": margin, "entangled": margin > 0.0}


def purity_certificate(shadows: ShadowSet, a: SubsystemMask) -> dict:
    """Subsystem-vs-full purity comparison: a subsystem strictly more mixed
    than the whole flags entanglement across the cut."""
    purity_a = purity_ustat(shadows, a)
    purity_full = purity_ustat(shadows, SubsystemMask.full(shadows.n))
    return {
        "purity_A": purity_a,
        "purity_full": purity_full,
        "flag": purity_a < purity_full,
    }
