"""Exception hierarchy shared by every efx module."""


class EfxError(Exception):
    """Base class for all toolkit errors."""


class DomainError(EfxError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class StructuralError(EfxError, ValueError):
    """Objects do not fit together (mismatched spaces, dimensions, references)."""


class NumericError(EfxError, ArithmeticError):
    """Non-finite input or a numerical result outside its roundoff allowance."""


class MappingError(EfxError, KeyError):
    """A symbol map is undefined on a symbol that actually occurs."""


class PreconditionError(EfxError):
    """The hypothesis of a lemma or theorem does not hold for the given inputs."""


class CapabilityError(EfxError):
    """A required capability (e.g. an analytic Jacobian) is missing."""


class DegenerateDomainError(EfxError, ValueError):
    """Too few distinct points for a pairwise quantity to be defined."""


class ResourceError(EfxError):
    """An enumeration or computation would exceed a configured cap."""
