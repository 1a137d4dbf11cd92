"""Exception hierarchy shared by all quadcatch modules."""


class QuadCatchError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(QuadCatchError, ValueError):
    """Non-finite, out-of-range or otherwise malformed input."""


class OutOfViewError(QuadCatchError):
    """A point cannot be projected because it lies behind the camera."""


class BeforeReleaseError(QuadCatchError):
    """Ground-truth position queried before the object left the hand."""


class InsufficientDataError(QuadCatchError):
    """Fewer observations than the regression needs."""


class DegenerateDataError(QuadCatchError):
    """Observations do not determine a unique solution (repeated stamps, identical points)."""


class NoCrossingError(QuadCatchError):
    """The predicted trajectory never reaches the requested target."""


class AlreadyPassedError(QuadCatchError):
    """The predicted crossing lies in the past."""


class PlanInfeasibleError(QuadCatchError):
    """A selector could not produce a catch plan for the current fit."""


class InvalidReferenceError(QuadCatchError, ValueError):
    """A joint reference trajectory is not uniformly sampled."""


class DivergedEpisodeError(QuadCatchError):
    """Joint velocities blew up during integration."""


class ConfigError(QuadCatchError, ValueError):
    """Configuration file could not be parsed or validated."""
