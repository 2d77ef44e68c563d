"""Exception types raised across the package."""


class PullbackLabError(Exception):
    """Base class for all package errors."""


class CapExceeded(PullbackLabError):
    """A polynomial expansion would exceed the configured degree cap."""


class OrbitOverflow(PullbackLabError):
    """An orbit value cannot be represented even in log space."""


class IncompleteRootSet(PullbackLabError):
    """The root engine could not account for every root; raise precision or budget."""


class ContourTooClose(PullbackLabError):
    """A root lies too close to a winding-number contour to count reliably."""


class ExceptionalStart(PullbackLabError):
    """Backward-orbit sampling was started at a point of the exceptional set."""


class DegenerateSeries(PullbackLabError):
    """A rate fit was given a series with non-positive values or too few points."""


class CriticalParameter(PullbackLabError):
    """The parameter is a root of one of the critical-orbit polynomials."""


class CriticalOrbitPoint(PullbackLabError):
    """The point lands on a critical point along the orbit."""


class ConfigError(PullbackLabError):
    """An experiment configuration could not be parsed or is invalid."""
