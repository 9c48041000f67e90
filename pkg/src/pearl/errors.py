"""Exception hierarchy shared by every module."""


class PearlError(Exception):
    """Base class for all package errors."""


class ValidationError(PearlError, ValueError):
    """Input data or arguments violate a documented invariant."""


class ParseError(ValidationError):
    """A data file could not be parsed."""


class PreconditionError(PearlError):
    """An operation was called on data that does not meet its precondition."""


class DegenerateGradientError(PearlError, ArithmeticError):
    """A utility gradient vanished where a direction was required."""


class FitError(PearlError, RuntimeError):
    """Training diverged or produced a non-finite loss."""
