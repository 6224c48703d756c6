"""Exception and warning types shared across the package."""


class NsgpError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(NsgpError, ValueError):
    """An input violates a documented precondition."""


class DataFormatError(ValidationError):
    """A data file violates the canonical schema.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(ValidationError):
    """An experiment configuration is malformed or inconsistent."""


class NumericalError(NsgpError, RuntimeError):
    """A numerical operation failed beyond recovery.

    ``jitter`` records the largest jitter attempted before giving up,
    so callers can see how far the escalation policy went.
    """

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class OptimizationError(NumericalError):
    """Hyper-parameter optimization could not produce a usable result."""


class StageError(NsgpError):
    """A stage of the adaptive fitting loop failed.

    ``stage`` names the stage, ``trace`` holds the partial iteration
    trace collected before the failure (may be None).
    """

    def __init__(self, stage, cause, trace=None):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace = trace


class ClampedVarianceWarning(RuntimeWarning):
    """A negative predictive variance was clamped to zero."""
