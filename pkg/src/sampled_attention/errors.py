"""Exception hierarchy shared by all modules."""


class AttentionError(Exception):
    """Base class for every error raised by this package."""


class InputValidationError(AttentionError, ValueError):
    """Malformed or non-finite input arrays."""


class ArgumentError(AttentionError, ValueError):
    """A scalar argument is out of its allowed range."""


class DegenerateError(AttentionError, ValueError):
    """The requested quantity is undefined for this input (zero norm, empty set, ...)."""


class DistributionError(AttentionError, ValueError):
    """A probability vector is negative or not normalized."""


class UnsupportedDimensionError(AttentionError, ValueError):
    """Operation is only defined for a particular head dimension."""


class FormatError(AttentionError, ValueError):
    """Binary file does not match the expected layout."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(AttentionError, ValueError):
    """Invalid experiment or workload configuration."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
