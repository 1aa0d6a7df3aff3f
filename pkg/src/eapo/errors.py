"""Exception types shared across the package."""


class EapoError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(EapoError, ValueError):
    """Non-finite, out-of-domain, or mis-shaped numeric input."""


class InsufficientDataError(EapoError, ValueError):
    """An estimation window is too short for the requested statistic."""


class ConfigurationError(EapoError, ValueError):
    """An unsupported or inconsistent configuration value."""


class AllZeroIntensityError(EapoError, ValueError):
    """Every intensity in the cross-section is zero; the ambiguity penalty
    is undefined and the caller must skip it."""


class EmptyUniverseError(EapoError, ValueError):
    """No asset survives a filtering rule (e.g. all emissions nonpositive)."""


class AlignmentError(EapoError, ValueError):
    """Two series or panels do not share a common calendar."""


class SchemaError(EapoError, ValueError):
    """A CSV input violates its schema; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalError(EapoError, RuntimeError):
    """A solver produced non-finite values or failed to make progress."""
