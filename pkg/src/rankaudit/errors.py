"""Exception types shared across the toolkit.

Everything deriving from :class:`AuditError` is a problem with the inputs or
the configuration (the CLI maps these to exit code 2); anything else escaping
a command is an internal error (exit code 1).
"""


class AuditError(Exception):
    """Base class for input, format, and configuration errors."""


class ParseError(AuditError):
    """A file could not be parsed; the message names the offending line."""


class ValidationError(AuditError):
    """Parsed data violates an invariant (range, uniqueness, positivity)."""


class FormatError(AuditError):
    """A binary payload does not match its declared layout."""


class ShapeMismatchError(AuditError):
    """Two masks that must share dims and spacing do not."""


class InsufficientDataError(AuditError):
    """An operation has no data to work with after joins and filters."""


class ConfigurationError(AuditError):
    """A run was requested with unusable parameters."""
