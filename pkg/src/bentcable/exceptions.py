"""Exception types raised across the package."""


class DomainError(ValueError):
    """An input lies outside the domain of a mathematical function."""


class ConfigurationError(ValueError):
    """Inconsistent dimensions, settings or graph structure."""


class IngestionError(ValueError):
    """A data file could not be parsed or joined onto the panel grid."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or singular quantity."""


class InitializationError(RuntimeError):
    """The sampler could not start from a finite posterior state."""

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump or {}
