"""Exception hierarchy for the BELM sampler toolkit."""


class BelmError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(BelmError, ValueError):
    """Invalid parameters, schedules or run configuration."""


class ScheduleError(ConfigurationError):
    """A noise schedule violates one of its invariants."""


class NotInvertibleError(ConfigurationError):
    """The requested sampler has no exact inverse for these parameters."""


class NumericalFailureError(BelmError, ArithmeticError):
    """A computation produced a singular system or a non-finite state."""


class SingularSystemError(NumericalFailureError):
    """Dense linear system is singular to working precision."""


class SingularStepError(NumericalFailureError):
    """A coefficient formula received a zero step size."""


class InsufficientDataError(NumericalFailureError):
    """Too few usable points to fit a convergence order."""
