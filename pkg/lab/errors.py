import typing

__all__ = (
    "IrlabError",
    "BadArgument",
    "DomainError",
    "RangeError",
    "CapacityError",
    "ConvergenceError",
    "PropagationError",
    "LeakageError",
    "QuadratureError",
    "AbsorptionError",
    "ConfigError",
)


class IrlabError(Exception):
    """Base class for every error raised on purpose by the lab."""


class BadArgument(IrlabError, ValueError):
    """An argument or precondition was not met."""


class DomainError(BadArgument):
    """A value lies outside the mathematical domain of an operation."""


class RangeError(BadArgument):
    """A lookup fell outside the tabulated range."""


class CapacityError(IrlabError):
    def __init__(self, msg: str, *, size: int, limit: int, params: dict[str, typing.Any]):
        super().__init__(msg)
        self.size = size
        self.limit = limit
        self.params = params


class ConvergenceError(IrlabError):
    def __init__(self, msg: str, *, best_residual: float, iterations: int):
        super().__init__(msg)
        self.best_residual = best_residual
        self.iterations = iterations


class PropagationError(IrlabError):
    def __init__(self, msg: str, *, time_reached: float, step: float, error_estimate: float):
        super().__init__(msg)
        self.time_reached = time_reached
        self.step = step
        self.error_estimate = error_estimate


class LeakageError(IrlabError):
    def __init__(self, msg: str, *, leakage: float, bound: float):
        super().__init__(msg)
        self.leakage = leakage
        self.bound = bound


class QuadratureError(IrlabError):
    def __init__(self, msg: str, *, estimate: float, error_bound: float):
        super().__init__(msg)
        self.estimate = estimate
        self.error_bound = error_bound


class AbsorptionError(IrlabError):
    def __init__(self, msg: str, *, mass_loss: float, bound: float):
        super().__init__(msg)
        self.mass_loss = mass_loss
        self.bound = bound


class ConfigError(IrlabError):
    def __init__(self, msg: str, *, key: str | None = None, suggestion: str | None = None):
        super().__init__(msg)
        self.key = key
        self.suggestion = suggestion
