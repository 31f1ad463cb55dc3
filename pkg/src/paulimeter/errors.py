"""Exception hierarchy.

The CLI maps these onto exit codes: input/format problems exit 2,
coverage/degeneracy problems exit 3.
"""


class PaulimeterError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(PaulimeterError):
    """Operands built for different qubit counts."""


class InvalidBasis(PaulimeterError):
    """A measurement basis contains identity letters."""


class DegenerateObservable(PaulimeterError):
    """Observable has no measurable content (empty or all-identity)."""


class CoverageError(PaulimeterError):
    """Some observable term is hit by no basis of the plan."""


class ForeignRecord(PaulimeterError):
    """A shot record's basis cannot have been produced by the plan."""


class EmptyInput(PaulimeterError):
    """An operation that needs data received none."""


class PlanMismatch(PaulimeterError):
    """Plan kind or plan length does not fit the requested operation."""


class FormatError(PaulimeterError):
    """Malformed input file; message carries the line number."""


class FeasibilityError(PaulimeterError):
    """Dense oracle asked for a system beyond its stated size bound."""
