"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters, dimensions or config file contents."""


class ContractViolation(ValueError):
    """A caller broke a precondition (shape mismatch, out-of-range argument)."""


class NumericalFailure(ArithmeticError):
    """An iterative method produced non-finite values or failed to converge."""

    def __init__(self, message, iteration=None, residual=None):
        super().__init__(message)
        self.iteration = iteration
        self.residual = residual


class UndefinedMetricError(ValueError):
    """The metric is undefined for the given reference (e.g. zero energy)."""


class EmptyResultError(RuntimeError):
    """No usable cell to select an optimum from."""
