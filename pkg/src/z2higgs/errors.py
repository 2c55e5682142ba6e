"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operation applied to a cell/form of an unsupported dimension."""


class ResourceError(RuntimeError):
    """Requested computation exceeds the configured enumeration budget."""

    def __init__(self, message, progress=None):
        super().__init__(message)
        self.progress = progress


class ConfigError(ValueError):
    """Invalid or unknown run-configuration content."""


class NumericError(RuntimeError):
    """Numerical failure (rank deficiency, non-finite action, ...)."""
