"""Exception types shared across the package."""


class FactdualError(Exception):
    """Base class for all package errors."""


class DomainError(FactdualError, ValueError):
    """Argument outside the mathematical domain of an operation (n = 0, composite p, ...)."""


class PreconditionError(FactdualError, ValueError):
    """Caller violated an operation precondition (basis too small, checkpoint past limit, ...)."""


class ResourceError(FactdualError, MemoryError):
    """Requested size cannot be allocated or exceeds the documented platform cap."""


class ConfigError(FactdualError, ValueError):
    """Invalid experiment configuration; ``fields`` lists the offending keys."""

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = list(fields)


class ExperimentError(FactdualError, RuntimeError):
    """An experiment in a run failed; ``completed`` lists the outputs written before it."""

    def __init__(self, message, completed=()):
        super().__init__(message)
        self.completed = list(completed)
