"""Exception hierarchy shared by all modules."""


class MonostencilError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(MonostencilError, ValueError):
    """Raised when an argument is non-finite, out of its domain, or malformed."""


class OutOfRangeError(InvalidInputError):
    """Raised when a construction is requested outside its validity range."""


class DegenerateGeometryError(MonostencilError, ArithmeticError):
    """Raised when a local moment system cannot be solved."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class CapacityError(MonostencilError):
    """Raised when a dense system would exceed the configured size limit."""


class SingularMatrixError(MonostencilError, ArithmeticError):
    """Raised when LU factorisation meets a (numerically) zero pivot."""
