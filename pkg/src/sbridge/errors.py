"""Exception hierarchy shared by all modules.

Validation problems derive from ``ValueError`` so callers can treat them as
bad input; numerical failures derive from ``NumericalError`` and map to a
distinct CLI exit code.
"""


class SBError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SBError, ValueError):
    """Bad arguments, shapes or configuration."""


class DimensionError(ValidationError):
    """Arrays whose trailing dimensions do not agree."""


class SingularHorizonError(ValidationError):
    """A time too close to the terminal horizon where the kernel degenerates."""


class FormatError(ValidationError):
    """A file whose layout, magic bytes or version is not understood."""


class NumericalError(SBError, ArithmeticError):
    """Overflow, underflow, NaN or an ill-conditioned matrix."""


class ConvergenceError(NumericalError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class TrainingError(NumericalError):
    """Training produced a non-finite loss."""

    def __init__(self, message, iteration=None, last_finite_loss=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_finite_loss = last_finite_loss
