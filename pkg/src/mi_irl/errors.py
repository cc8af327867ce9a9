"""Exception types raised across the package."""


class MiIrlError(Exception):
    """Base class for all package errors."""


class ValidationError(MiIrlError, ValueError):
    """An input violates a documented invariant (shape, normalization, range)."""


class ConvergenceError(MiIrlError):
    """An iterative solver hit its iteration cap."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NumericalError(MiIrlError, ArithmeticError):
    """A log-space computation still produced a non-finite result."""
