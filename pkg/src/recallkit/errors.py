"""Exception types shared across the package."""

from __future__ import annotations


class RecallKitError(Exception):
    """Base class for all recallkit errors."""


class ValidationError(RecallKitError):
    """Input data failed validation (bad corpus record, timestamp regression, ...)."""


class ConfigurationError(RecallKitError):
    """Incompatible configuration, e.g. vectors that do not fit a matrix's dictionary."""


class NotFoundError(RecallKitError):
    """A referenced user, item or file does not exist."""


class IntegrityError(RecallKitError):
    """On-disk state is corrupt or incomplete.

    Carries the offending path and, when known, the 1-based line number so
    callers can report exactly where the damage is.
    """

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(prefix + message)
