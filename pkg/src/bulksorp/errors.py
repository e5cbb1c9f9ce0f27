"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a quantity is defined."""


class UsageError(ValueError):
    """Inconsistent or malformed arguments (dimension mismatch, bad flags, ...)."""


class StepFailure(RuntimeError):
    """A single time step could not be completed; the caller should retry with a smaller dt."""
