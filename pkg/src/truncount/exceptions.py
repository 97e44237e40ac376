"""Exception hierarchy shared by every truncount module."""


class TruncountError(Exception):
    """Base class for errors raised by truncount."""


class DomainError(TruncountError, ValueError):
    """An argument lies outside the domain of the operation."""


class ValidationError(TruncountError, ValueError):
    """Input data failed validation.

    ``problems`` holds one message per offending row or field so callers can
    report every defect at once instead of stopping at the first.
    """

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])


class NumericalError(TruncountError, ArithmeticError):
    """A numerical procedure failed (singular matrix, no usable direction)."""
