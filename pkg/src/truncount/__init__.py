"""Right-truncated count data: distribution fits, mixed-effects regression,
discriminant classification and a page-allocation integer program."""

from .exceptions import DomainError, NumericalError, TruncountError, ValidationError

__version__ = "0.1.0"

__all__ = ["DomainError", "NumericalError", "TruncountError", "ValidationError", "__version__"]
