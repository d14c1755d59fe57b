"""Exception hierarchy shared by every compmr module."""


class CompMRError(Exception):
    """Base class for all compmr errors."""


class ConfigurationError(CompMRError):
    """A spec, atom registry or graph declaration is inconsistent."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UsageError(CompMRError, ValueError):
    """An API was called with arguments violating its preconditions."""


class NotComputed(CompMRError):
    """Raised by trace readers when a value was never produced."""
