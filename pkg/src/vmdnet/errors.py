"""Exception hierarchy shared across the package.

The CLI maps :class:`UsageError` and its subclasses to exit status 2 and
every other :class:`VmdnetError` to exit status 1.
"""


class VmdnetError(Exception):
    """Base class for all package errors."""


class UsageError(VmdnetError):
    """Bad arguments or configuration supplied by the caller."""


class ConfigError(UsageError):
    pass


class InputError(UsageError):
    """Invalid input values (non-finite samples, bad bounds, empty buffers)."""


class ShapeError(InputError):
    pass


class DataError(VmdnetError):
    """The data itself cannot be processed (fully missing column, ...)."""


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class TrainingError(VmdnetError):
    """Training produced a non-finite loss."""


class StaleCacheError(VmdnetError):
    """A forward cache was reused after backward or after a parameter update."""
