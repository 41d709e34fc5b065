"""Exception hierarchy.

Configuration problems derive from :class:`ConfigError` (CLI exit code 2),
numerical failures from :class:`NumericError` (CLI exit code 3).
"""


class LevyWhittleError(Exception):
    """Base class for all package errors."""


class ConfigError(LevyWhittleError, ValueError):
    """Malformed or inadmissible experiment configuration."""

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DomainError(LevyWhittleError, ValueError):
    """Argument outside the admissible parameter box or frequency band."""


class ShapeError(LevyWhittleError, ValueError):
    """Observation grid and model disagree in shape."""


class DegenerateDriverError(DomainError):
    """Driver with zero variance (no Brownian part and no jumps)."""


class DegenerateHarmonicError(DomainError):
    """Harmonic with zero amplitude."""


class UnsupportedOrderError(DomainError):
    """Spectral density of an order without an analytic cumulant."""


class NumericError(LevyWhittleError, ArithmeticError):
    """Numerical routine failed to deliver the requested accuracy."""


class QuadratureError(NumericError):
    def __init__(self, message, achieved=None):
        self.achieved = achieved
        if achieved is not None:
            message = f"{message} (achieved error estimate {achieved:.3e})"
        super().__init__(message)


class SingularNormingError(NumericError):
    """A gradient coordinate has zero L2 norm on [0, T]."""


class IllConditionedError(NumericError):
    pass


class ModelPositivityError(NumericError):
    """Spectral density evaluated to a non-positive value."""
