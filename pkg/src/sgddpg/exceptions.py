"""Exception types raised across the package."""


class DimensionMismatchError(ValueError):
    """Array shapes that must agree do not."""


class FactorizationError(ArithmeticError):
    """A covariance matrix stayed non positive-definite after jitter escalation."""


class NonFiniteError(FloatingPointError):
    """A NaN or infinity appeared where a finite value is required."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration values."""
