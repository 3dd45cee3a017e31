"""Exception types raised across the package."""


class RGTransportError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RGTransportError, ValueError):
    """A configuration value was rejected (e.g. L/eps not integral)."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class UnsupportedDimensionError(ConfigurationError):
    pass


class ShapeError(RGTransportError, ValueError):
    """A field does not match the lattice geometry."""


class InvalidCovarianceError(RGTransportError, ValueError):
    pass


class DegenerateEstimateError(RGTransportError, ArithmeticError):
    """All importance weights vanished; the log-mean-exp is undefined."""


class DomainError(RGTransportError, ValueError):
    """A test function left the interval on which a divergence is defined."""


class StepSizeError(RGTransportError, RuntimeError):
    """MCMC acceptance collapsed, or an integrator step blew up."""


class InstabilityError(StepSizeError):
    pass


class GridTooCoarseError(RGTransportError, RuntimeError):
    pass


class CorruptionError(RGTransportError, IOError):
    """Ensemble payload does not match its recorded length or hash."""
