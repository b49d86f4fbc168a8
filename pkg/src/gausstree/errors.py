"""Exception types shared across the package."""


class GaussTreeError(Exception):
    """Base class for all package errors."""


class DomainError(GaussTreeError, ValueError):
    """An argument lies outside the domain of the operation."""


class ResourceError(GaussTreeError, RuntimeError):
    """A vertex, memory or size budget would be exceeded."""


class PrecisionError(GaussTreeError, ArithmeticError):
    """The requested accuracy cannot be certified."""


class NumericError(GaussTreeError, ArithmeticError):
    """A numerical routine (quadrature, eigensolver) failed."""


class ConsistencyError(GaussTreeError, AssertionError):
    """An inequality that must hold by theorem was violated, i.e. a bug."""
