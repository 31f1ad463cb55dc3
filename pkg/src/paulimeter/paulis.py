"""Pauli-string algebra on bit-planes.

An n-qubit Pauli string is a tensor product of single-qubit operators from
{I, X, Y, Z}.  It is stored as two n-bit integers, ``x`` and ``z``: bit i of
``x`` set means site i carries an X component, bit i of ``z`` a Z component.
Letter code per site: I=(0,0), X=(1,0), Y=(1,1), Z=(0,1).  Site 0 is the
leftmost letter of the text form, so ``"XZYI"`` puts X on site 0.

The two-bit-plane layout makes the hit and compatibility relations (the
estimator inner loops) a handful of word-parallel bit operations instead of
per-site letter comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import DegenerateObservable, DimensionMismatch

MAX_QUBITS = 16

_LETTERS = "IXYZ"
_CODE = {"I": 0, "X": 1, "Y": 2, "Z": 3}
# (x bit, z bit) per letter code
_PLANES = {0: (0, 0), 1: (1, 0), 2: (1, 1), 3: (0, 1)}

# sigma_a . sigma_b = i**_MUL_PHASE[a][b] . sigma_(a xor planes b)
_MUL_PHASE = [[0] * 4 for _ in range(4)]
_MUL_PHASE[1][2] = 1  # X.Y = iZ
_MUL_PHASE[2][3] = 1  # Y.Z = iX
_MUL_PHASE[3][1] = 1  # Z.X = iY
_MUL_PHASE[2][1] = 3  # Y.X = -iZ
_MUL_PHASE[3][2] = 3  # Z.Y = -iX
_MUL_PHASE[1][3] = 3  # X.Z = -iY

_I2 = np.eye(2, dtype=complex)
_X2 = np.array([[0, 1], [1, 0]], dtype=complex)
_Y2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z2 = np.array([[1, 0], [0, -1]], dtype=complex)
_MATS = (_I2, _X2, _Y2, _Z2)


@dataclass(frozen=True, slots=True)
class PauliString:
    """Immutable n-qubit Pauli string.

    Attributes:
        n: qubit count, 1 <= n <= 16.
        x: X bit-plane (bit i set iff site i is X or Y).
        z: Z bit-plane (bit i set iff site i is Z or Y).
    """

    n: int
    x: int
    z: int

    def __post_init__(self) -> None:
        if not 1 <= self.n <= MAX_QUBITS:
            raise ValueError(f"qubit count {self.n} outside 1..{MAX_QUBITS}")
        mask = (1 << self.n) - 1
        if self.x & ~mask or self.z & ~mask:
            raise ValueError("bit-plane exceeds qubit count")

    @classmethod
    def from_text(cls, text: str) -> "PauliString":
        """Parse the plain uppercase form, e.g. ``"XZYI"``."""
        if not text:
            raise ValueError("empty Pauli string")
        x = z = 0
        for i, ch in enumerate(text):
            try:
                code = _CODE[ch]
            except KeyError:
                raise ValueError(f"invalid Pauli letter {ch!r} in {text!r}") from None
            bx, bz = _PLANES[code]
            x |= bx << i
            z |= bz << i
        return cls(len(text), x, z)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0)

    @classmethod
    def from_codes(cls, codes) -> "PauliString":
        """Build from a sequence of letter codes 0..3 (I,X,Y,Z)."""
        x = z = 0
        for i, code in enumerate(codes):
            bx, bz = _PLANES[int(code)]
            x |= bx << i
            z |= bz << i
        return cls(len(codes), x, z)

    def code(self, i: int) -> int:
        """Letter code 0..3 (I,X,Y,Z) at site i."""
        return _recode((self.x >> i) & 1, (self.z >> i) & 1)

    def codes(self) -> np.ndarray:
        """All letter codes as an int8 array of length n."""
        idx = np.arange(self.n)
        bx = (self.x >> idx) & 1
        bz = (self.z >> idx) & 1
        return _recode_array(bx, bz)

    @property
    def letters(self) -> str:
        return "".join(_LETTERS[_recode((self.x >> i) & 1, (self.z >> i) & 1)] for i in range(self.n))

    @property
    def support_mask(self) -> int:
        """Bitmask of non-identity sites."""
        return self.x | self.z

    @property
    def support(self) -> tuple[int, ...]:
        """0-based indices of non-identity sites."""
        m = self.support_mask
        return tuple(i for i in range(self.n) if (m >> i) & 1)

    @property
    def weight(self) -> int:
        return self.support_mask.bit_count()

    @property
    def is_identity(self) -> bool:
        return self.support_mask == 0

    @property
    def is_full_weight(self) -> bool:
        return self.support_mask == (1 << self.n) - 1

    def to_matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix (oracle use only)."""
        out = np.array([[1.0 + 0j]])
        for i in range(self.n):
            out = np.kron(out, _MATS[_recode((self.x >> i) & 1, (self.z >> i) & 1)])
        return out

    def __str__(self) -> str:
        return self.letters

    def __repr__(self) -> str:
        return f"PauliString({self.letters!r})"


def _recode(bx: int, bz: int) -> int:
    if bx:
        return 2 if bz else 1
    return 3 if bz else 0


def _recode_array(bx: np.ndarray, bz: np.ndarray) -> np.ndarray:
    out = np.zeros(bx.shape, dtype=np.int8)
    out[(bx == 1) & (bz == 0)] = 1
    out[(bx == 1) & (bz == 1)] = 2
    out[(bx == 0) & (bz == 1)] = 3
    return out


@dataclass(frozen=True, slots=True)
class PhasedPauli:
    """A Pauli string with a fourth-root-of-unity phase (product closure)."""

    phase: complex
    pauli: PauliString

    def __post_init__(self) -> None:
        if self.phase not in (1, 1j, -1, -1j):
            raise ValueError(f"phase {self.phase!r} is not a fourth root of unity")


def _require_same_n(a: PauliString, b: PauliString) -> None:
    if a.n != b.n:
        raise DimensionMismatch(f"qubit counts differ: {a.n} vs {b.n}")


def multiply(a: PauliString, b: PauliString) -> PhasedPauli:
    """Product a.b with its accumulated phase.

    Involutive up to phase: multiply(a, a) == (+1, identity).
    """
    _require_same_n(a, b)
    exp = 0
    for i in range(a.n):
        exp += _MUL_PHASE[_recode((a.x >> i) & 1, (a.z >> i) & 1)][_recode((b.x >> i) & 1, (b.z >> i) & 1)]
    phase = (1, 1j, -1, -1j)[exp & 3]
    return PhasedPauli(phase, PauliString(a.n, a.x ^ b.x, a.z ^ b.z))


def hits(basis: PauliString, obs: PauliString) -> bool:
    """True iff measuring ``basis`` determines ``obs``.

    Every non-identity letter of ``obs`` must equal the corresponding letter
    of ``basis`` (identity letters of ``obs`` are unconstrained).
    """
    _require_same_n(basis, obs)
    m = obs.x | obs.z
    return not ((obs.x ^ basis.x) & m or (obs.z ^ basis.z) & m)


def compatible(a: PauliString, b: PauliString) -> bool:
    """True iff a common hitting basis exists (sitewise equal or identity)."""
    _require_same_n(a, b)
    m = (a.x | a.z) & (b.x | b.z)
    return not ((a.x ^ b.x) & m or (a.z ^ b.z) & m)


class WeightedPauliSum:
    """Real-weighted sum of distinct Pauli strings, O = sum_l alpha_l O_l.

    Terms are kept in insertion order.  Construction rejects duplicate
    Pauli strings and zero coefficients; use :meth:`from_terms` to collect
    arbitrary (coefficient, pauli) pairs first.
    """

    __slots__ = ("n", "coeffs", "paulis")

    def __init__(self, n: int, terms) -> None:
        coeffs: list[float] = []
        paulis: list[PauliString] = []
        seen: set[tuple[int, int]] = set()
        for coeff, pauli in terms:
            if pauli.n != n:
                raise DimensionMismatch(f"term {pauli} has n={pauli.n}, sum has n={n}")
            if coeff == 0:
                raise ValueError(f"zero coefficient for term {pauli}")
            key = (pauli.x, pauli.z)
            if key in seen:
                raise ValueError(f"duplicate Pauli term {pauli}")
            seen.add(key)
            coeffs.append(float(coeff))
            paulis.append(pauli)
        self.n = n
        self.coeffs = tuple(coeffs)
        self.paulis = tuple(paulis)

    @classmethod
    def from_terms(cls, n: int, terms, tol: float = 0.0) -> "WeightedPauliSum":
        """Collect (coefficient, pauli) pairs, summing duplicates.

        Terms whose collected |coefficient| <= ``tol`` are dropped.
        """
        acc: dict[tuple[int, int], float] = {}
        order: list[tuple[int, int]] = []
        for coeff, pauli in terms:
            if pauli.n != n:
                raise DimensionMismatch(f"term {pauli} has n={pauli.n}, sum has n={n}")
            key = (pauli.x, pauli.z)
            if key not in acc:
                acc[key] = 0.0
                order.append(key)
            acc[key] += float(coeff)
        kept = [(acc[k], PauliString(n, k[0], k[1])) for k in order if abs(acc[k]) > tol and acc[k] != 0.0]
        return cls(n, kept)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __iter__(self) -> Iterator[tuple[float, PauliString]]:
        return iter(zip(self.coeffs, self.paulis))

    @property
    def l1_norm(self) -> float:
        return float(sum(abs(c) for c in self.coeffs))

    def to_matrix(self) -> np.ndarray:
        dim = 2 ** self.n
        out = np.zeros((dim, dim), dtype=complex)
        for coeff, pauli in self:
            out += coeff * pauli.to_matrix()
        return out

    def require_nonempty(self) -> None:
        if len(self) == 0 or all(p.is_identity for p in self.paulis):
            raise DegenerateObservable("observable has no non-identity content")

    def __repr__(self) -> str:
        inner = " + ".join(f"{c:g}*{p}" for c, p in list(self)[:4])
        more = "" if len(self) <= 4 else f" + ... ({len(self)} terms)"
        return f"WeightedPauliSum({inner}{more})"


def square(h: WeightedPauliSum) -> WeightedPauliSum:
    """Pauli expansion of H.H with coefficients collected.

    All collected coefficients are real because H is Hermitian with real
    coefficients; terms below 1e-12 in magnitude are discarded as
    floating-point dust.
    """
    acc: dict[tuple[int, int], complex] = {}
    order: list[tuple[int, int]] = []
    for ca, pa in h:
        for cb, pb in h:
            prod = multiply(pa, pb)
            key = (prod.pauli.x, prod.pauli.z)
            if key not in acc:
                acc[key] = 0.0 + 0j
                order.append(key)
            acc[key] += ca * cb * prod.phase
    terms = []
    for key in order:
        val = acc[key]
        if abs(val.imag) > 1e-12:
            raise AssertionError(f"non-real coefficient {val} in a Hermitian square")
        if abs(val.real) >= 1e-12:
            terms.append((val.real, PauliString(h.n, key[0], key[1])))
    return WeightedPauliSum(h.n, terms)
