"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or arguments (CLI exit code 1)."""


class NumericalError(ArithmeticError):
    """Numerical failure: singular systems, non-PSD covariances, blow-ups (exit code 2)."""
