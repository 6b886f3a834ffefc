"""Exception hierarchy shared by all modules."""


class SQGError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(SQGError, ValueError):
    """Inconsistent grid, config key, or operator/field pairing."""


class InvalidInputError(SQGError, ValueError):
    """An argument violates an operation's precondition."""


class ResolutionError(SQGError):
    """The discretization is too coarse for the requested accuracy."""


class CFLError(SQGError):
    """A time step was rejected by the advective CFL guard."""

    def __init__(self, message, time, cfl):
        super().__init__(message)
        self.time = time
        self.cfl = cfl


class DivergenceError(SQGError):
    """Non-finite coefficients appeared during time stepping.

    ``last_good_time`` is the last time at which the state was finite and
    ``partial`` optionally carries whatever was recorded before the failure.
    """

    def __init__(self, message, last_good_time, partial=None):
        super().__init__(message)
        self.last_good_time = last_good_time
        self.partial = partial


class FitError(SQGError, ValueError):
    """Exponential-rate fit could not be performed on the given series."""
