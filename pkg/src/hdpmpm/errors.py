"""Exception hierarchy shared by every module."""


class HDPMPMError(Exception):
    """Base class for all package errors."""


class ParameterError(HDPMPMError, ValueError):
    """A distribution or operation received an invalid parameter."""


class DataError(HDPMPMError, ValueError):
    """Input data is malformed (bad level code, column mismatch, empty file...)."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} (at {', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class InitializationError(HDPMPMError):
    """The chain could not be initialized from the supplied dataset."""


class NumericalError(HDPMPMError, ArithmeticError):
    """A conditional became undefined (zero normalizer, non-finite log term)."""


class SaturationError(HDPMPMError):
    """The number of occupied clusters reached the truncation level K."""

    def __init__(self, message, events=()):
        super().__init__(message)
        self.events = list(events)


class PreconditionError(HDPMPMError):
    """An operation was called on inputs that do not meet its contract."""


class SchemaError(HDPMPMError):
    """A persisted file does not match the expected schema or is truncated."""
