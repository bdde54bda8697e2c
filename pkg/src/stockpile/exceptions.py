"""Exception types shared across the package."""


class StockpileError(Exception):
    """Base class for package-specific errors."""


class ConvergenceError(StockpileError):
    """An iterative routine failed to converge within its iteration budget.

    Carries the residual history so callers can inspect how the iteration
    behaved before giving up.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class ModelValidationError(StockpileError):
    """A model specification or economy violates a structural requirement."""


class ConfigError(StockpileError):
    """A run configuration file is malformed or fails schema validation."""
