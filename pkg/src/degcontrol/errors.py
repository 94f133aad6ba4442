"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or produced non-finite values."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConditioningError(NumericalError):
    """A linear system was too ill-conditioned to be solved reliably."""


class ControllabilityError(RuntimeError):
    """The coupled system fails the rank condition, so no control is built."""

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConfigurationError(ValueError):
    """Invalid parameters for an experiment."""
