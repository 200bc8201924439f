"""Exception hierarchy shared by every module."""


class LmForecastError(Exception):
    """Base class for all package errors."""


class SolveFailure(LmForecastError):
    """Damped normal matrix could not be factorized, even with jitter."""


class DegenerateSeries(LmForecastError):
    pass


class SeriesTooShort(LmForecastError):
    pass


class EmptySeries(LmForecastError):
    pass


class ColumnNotFound(LmForecastError):
    pass


class DegenerateSplit(LmForecastError):
    pass


class ZeroTarget(LmForecastError):
    pass


class ZeroVariance(LmForecastError):
    pass


class ConfigError(LmForecastError):
    pass
