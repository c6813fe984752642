"""Exceptions shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class ConfigError(ValueError):
    """Configuration file is syntactically or semantically invalid."""


class DivergenceError(RuntimeError):
    """Training produced non-finite loss."""
