"""Exact density-matrix simulator and brute-force oracle.

Everything here is dense 2^n linear algebra, deliberately: these routines
are the ground truth the estimators are checked against, so they trade
speed for directness.  Sites are 0-based internally; :class:`SubsystemMask`
speaks the 1-based labels used everywhere user-facing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, FeasibilityError, InvalidBasis
from .paulis import MAX_QUBITS, PauliString, WeightedPauliSum

_HERMITIAN_TOL = 1e-10
_TRACE_TOL = 1e-10
_PSD_TOL = -1e-8
# eigvalsh cost grows as 8^n; skip the PSD eigencheck past this point
_PSD_CHECK_MAX_N = 10

_EIGBASIS = {
    # rows are <b| in the eigenbasis of the letter: prob(b) = <b|U rho U^dag|b>
    1: np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0),       # X
    2: np.array([[1, -1j], [1, 1j]], dtype=complex) / np.sqrt(2.0),     # Y
    3: np.eye(2, dtype=complex),                                        # Z
}


class DensityMatrix:
    """Validated n-qubit density matrix.

    Invariants checked at construction: Hermitian to 1e-10, unit trace to
    1e-10, and (for n small enough to eigensolve) smallest eigenvalue
    >= -1e-8.
    """

    __slots__ = ("n", "mat")

    def __init__(self, n: int, mat: np.ndarray) -> None:
        if not 1 <= n <= MAX_QUBITS:
            raise ValueError(f"qubit count {n} outside 1..{MAX_QUBITS}")
        dim = 2 ** n
        mat = np.array(mat, dtype=complex)
        if mat.shape != (dim, dim):
            raise DimensionMismatch(f"matrix shape {mat.shape} does not fit n={n}")
        if np.max(np.abs(mat - mat.conj().T)) > _HERMITIAN_TOL:
            raise ValueError("matrix is not Hermitian")
        tr = np.trace(mat)
        if abs(tr - 1.0) > _TRACE_TOL:
            raise ValueError(f"trace {tr} is not 1")
        if n <= _PSD_CHECK_MAX_N:
            lo = np.linalg.eigvalsh(mat)[0]
            if lo < _PSD_TOL:
                raise ValueError(f"matrix is not PSD (min eigenvalue {lo})")
        self.n = n
        self.mat = mat
        self.mat.setflags(write=False)

    def __repr__(self) -> str:
        return f"DensityMatrix(n={self.n})"


@dataclass(frozen=True, slots=True)
class SubsystemMask:
    """Subset of sites, labelled 1..n as in all user-facing text."""

    n: int
    members: frozenset[int]

    def __post_init__(self) -> None:
        if not all(1 <= m <= self.n for m in self.members):
            raise ValueError(f"mask members {sorted(self.members)} outside 1..{self.n}")

    @classmethod
    def of(cls, n: int, *members: int) -> "SubsystemMask":
        return cls(n, frozenset(members))

    @classmethod
    def full(cls, n: int) -> "SubsystemMask":
        return cls(n, frozenset(range(1, n + 1)))

    @classmethod
    def from_text(cls, n: int, text: str) -> "SubsystemMask":
        """Parse labels joined by commas or hyphens, e.g. ``"1,2"``."""
        parts = [p for p in text.replace("-", ",").split(",") if p]
        return cls(n, frozenset(int(p) for p in parts))

    @property
    def indices(self) -> tuple[int, ...]:
        """Sorted 0-based site indices."""
        return tuple(sorted(m - 1 for m in self.members))

    def complement(self) -> "SubsystemMask":
        return SubsystemMask(self.n, frozenset(range(1, self.n + 1)) - self.members)

    def __str__(self) -> str:
        return "-".join(str(m) for m in sorted(self.members)) or "(empty)"


def ghz(n: int) -> DensityMatrix:
    """Pure projector onto (|0...0> + |1...1>)/sqrt(2)."""
    dim = 2 ** n
    vec = np.zeros(dim, dtype=complex)
    vec[0] = vec[-1] = 1.0 / np.sqrt(2.0)
    return DensityMatrix(n, np.outer(vec, vec.conj()))


def admix_white_noise(rho: DensityMatrix, p: float) -> DensityMatrix:
    """(1-p) rho + p I/2^n."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"noise weight {p} outside [0, 1]")
    dim = 2 ** rho.n
    return DensityMatrix(rho.n, (1.0 - p) * rho.mat + p * np.eye(dim) / dim)


def noise_from_fidelity(n: int, fidelity: float) -> float:
    """White-noise weight p giving the stated fidelity to the pure target.

    For rho = (1-p)|g><g| + p I/2^n, F = <g|rho|g> = (1-p) + p/2^n, so
    p = (1-F) 2^n/(2^n - 1).
    """
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError(f"fidelity {fidelity} outside [0, 1]")
    dim = 2 ** n
    return (1.0 - fidelity) * dim / (dim - 1)


def exact_expectation(rho: DensityMatrix, o: WeightedPauliSum) -> float:
    """Oracle for Tr(O rho) = sum_l alpha_l Tr(rho O_l)."""
    if rho.n != o.n:
        raise DimensionMismatch(f"state n={rho.n}, observable n={o.n}")
    total = 0.0 + 0j
    for coeff, pauli in o:
        total += coeff * np.einsum("ij,ji->", rho.mat, pauli.to_matrix())
    if abs(total.imag) > 1e-10:
        raise AssertionError(f"expectation has imaginary part {total.imag}")
    return float(total.real)


def born_distribution(rho: DensityMatrix, basis: PauliString) -> np.ndarray:
    """Exact outcome distribution over the 2^n bit-strings of a basis.

    Outcome index encodes bits with site 0 as the most significant bit, so
    index b has bit_i(b) = (b >> (n-1-i)) & 1.  Bit 0 maps to eigenvalue +1,
    bit 1 to -1, per site.
    """
    if rho.n != basis.n:
        raise DimensionMismatch(f"state n={rho.n}, basis n={basis.n}")
    if not basis.is_full_weight:
        raise InvalidBasis(f"basis {basis} contains identity letters")
    n = rho.n
    arr = rho.mat.reshape((2,) * (2 * n))
    for i in range(n):
        u = _EIGBASIS[basis.code(i)]
        # rotate ket axis i and bra axis n+i into the letter's eigenbasis
        arr = np.tensordot(u, arr, axes=([1], [i]))
        arr = np.moveaxis(arr, 0, i)
        arr = np.tensordot(arr, u.conj().T, axes=([n + i], [0]))
        arr = np.moveaxis(arr, -1, n + i)
    dim = 2 ** n
    probs = np.real(np.diagonal(arr.reshape(dim, dim)).copy())
    probs[probs < 0] = 0.0
    return probs / probs.sum()


def sample_outcomes(rho: DensityMatrix, basis: PauliString, shots: int, seed) -> np.ndarray:
    """i.i.d. Born-rule draws; returns a (shots, n) uint8 bit array.

    The full 2^n distribution is computed once, then outcomes are drawn by
    inverse CDF, which keeps repeated sampling cheap and exactly
    reproducible for a fixed seed.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    probs = born_distribution(rho, basis)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = np.searchsorted(np.cumsum(probs), rng.random(shots), side="right")
    draws = np.minimum(draws, len(probs) - 1)
    n = rho.n
    shifts = n - 1 - np.arange(n)
    return ((draws[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def partial_trace(rho: DensityMatrix, keep: SubsystemMask) -> np.ndarray:
    """Trace out the complement of ``keep``; returns a dense matrix."""
    if keep.n != rho.n:
        raise DimensionMismatch("mask and state sizes differ")
    n = rho.n
    keep_idx = keep.indices
    drop_idx = tuple(i for i in range(n) if i not in keep_idx)
    arr = rho.mat.reshape((2,) * (2 * n))
    for k, i in enumerate(drop_idx):
        arr = np.trace(arr, axis1=i - k, axis2=n - k + i - k)
    d = 2 ** len(keep_idx)
    return arr.reshape(d, d)


def partial_transpose(rho: DensityMatrix, a: SubsystemMask) -> np.ndarray:
    """Transpose the indices of subsystem A only; returns a dense matrix."""
    if a.n != rho.n:
        raise DimensionMismatch("mask and state sizes differ")
    n = rho.n
    arr = rho.mat.reshape((2,) * (2 * n))
    for i in a.indices:
        arr = np.swapaxes(arr, i, n + i)
    dim = 2 ** n
    return arr.reshape(dim, dim)


def exact_pt_moment(rho: DensityMatrix, a: SubsystemMask, order: int) -> float:
    """p_order = Tr[(rho^{T_A})^order] via eigenvalues of the PT matrix."""
    if order < 1:
        raise ValueError("order must be >= 1")
    evals = np.linalg.eigvalsh(partial_transpose(rho, a))
    return float(np.sum(evals ** order))


def exact_subsystem_purity(rho: DensityMatrix, a: SubsystemMask) -> float:
    """Tr(rho_A^2) by partial trace; Frobenius norm of the Hermitian rho_A."""
    if not a.members:
        raise ValueError("purity of an empty subsystem is undefined")
    sub = partial_trace(rho, a)
    return float(np.real(np.vdot(sub, sub)))


def random_mixed_state(n: int, rng) -> DensityMatrix:
    """Full-rank generic test state: normalized A A^dag, A complex normal."""
    dim = 2 ** n
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = a @ a.conj().T
    m /= np.trace(m).real
    m = (m + m.conj().T) / 2
    return DensityMatrix(n, m)


def permutation_moment_oracle(rho: DensityMatrix, a: SubsystemMask, order: int) -> float:
    """Contract the copy-permutation operators against rho^(tensor order).

    Builds the forward cyclic shift on the A sites and the backward shift on
    the B sites of ``order`` copies, then evaluates
    Tr[Pi_A_forward Pi_B_backward rho^(x order)] index by index.  This is
    the direct (no partial transpose) side of the PT-moment identity.
    """
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    n = rho.n
    if order * n > 12:
        raise FeasibilityError(f"order*n = {order * n} exceeds the dense bound 12")
    a_idx = set(a.indices)
    dim_total = 2 ** (n * order)
    xs = np.arange(dim_total)

    # bits of global index: copy k, site j lives at position (order-1-k)*n + (n-1-j)
    def bit(idx, k, j):
        return (idx >> ((order - 1 - k) * n + (n - 1 - j))) & 1

    # y = pi^{-1}(x): for site j in A the copies shift forward (copy k takes
    # its bit from copy k-1), in B backward (from copy k+1)
    ys = np.zeros_like(xs)
    for k in range(order):
        for j in range(n):
            src = (k - 1) % order if j in a_idx else (k + 1) % order
            ys |= bit(xs, src, j) << ((order - 1 - k) * n + (n - 1 - j))

    # Tr[Pi rho^(x m)] = sum_x prod_k rho[copy_k(pi^{-1} x), copy_k(x)]
    dim = 2 ** n
    total = np.ones(dim_total, dtype=complex)
    for k in range(order):
        shift = (order - 1 - k) * n
        rows = (ys >> shift) & (dim - 1)
        cols = (xs >> shift) & (dim - 1)
        total *= rho.mat[rows, cols]
    result = total.sum()
    if abs(result.imag) > 1e-10:
        raise AssertionError(f"moment has imaginary part {result.imag}")
    return float(result.real)
