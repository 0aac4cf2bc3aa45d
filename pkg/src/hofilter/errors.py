"""Exception types shared across the package."""


class FilterError(Exception):
    pass


class RejectedInput(FilterError, ValueError):
    """Arguments violate a precondition (dimension, range, grid mismatch)."""


class CapabilityError(FilterError):
    """The requested operation is not supported by this object."""


class NumericBlowUp(FilterError, FloatingPointError):
    pass


class PathParseError(FilterError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
