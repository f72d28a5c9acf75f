"""Exception types shared across the package."""


class DivergenceError(ValueError):
    """A series for a completion-time moment has no finite value."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""


class InvariantViolation(RuntimeError):
    """A structural property that must hold for every solve failed at runtime."""
