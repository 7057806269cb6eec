"""Exception hierarchy shared across the package."""


class IOHunterError(Exception):
    """Base class for all errors raised by this package."""


class InputError(IOHunterError):
    """Invalid user-supplied data or configuration (CLI exit code 2)."""


class FormatError(InputError):
    """A file does not conform to its documented layout."""
