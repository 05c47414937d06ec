"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class InitializationError(RuntimeError):
    """No safe initial backup sequence could be found; the run must not start."""


class InvariantViolationError(RuntimeError):
    """The stored backup chain is broken. This signals a bug or a model
    mismatch and always aborts the run (fail closed)."""
