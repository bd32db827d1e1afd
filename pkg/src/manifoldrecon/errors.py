"""Exception types raised across the package."""


class ReconError(Exception):
    """Base class for all package errors."""


class DimensionError(ReconError, ValueError):
    """Array extents are inconsistent or unsupported."""


class NumericalError(ReconError, ArithmeticError):
    """An iterative method diverged or produced non-finite values.

    ``partial`` optionally carries the last finite state (an array, a
    parameter set or a result object) so callers can inspect it.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class DegenerateInputError(ReconError, ValueError):
    """Input carries no signal (all zeros, flat image, ...)."""


class ConfigError(ReconError, ValueError):
    """A configuration value is outside its allowed range."""
