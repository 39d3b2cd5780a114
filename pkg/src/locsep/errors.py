"""Exception types raised across the toolkit."""

import numpy as np


class ConfigurationError(ValueError):
    """Inconsistent parameters (window/shift, array/channel counts, ...)."""


class EmptyInputError(ValueError):
    pass


class WavFormatError(ValueError):
    """Unsupported codec or malformed/truncated RIFF file."""


class SampleRateMismatchError(ValueError):
    pass


class DegenerateGeometryError(ValueError):
    """Coincident microphones, or a source sitting on a microphone."""


class DimensionError(ValueError):
    pass


class ConditioningError(np.linalg.LinAlgError):
    """A covariance matrix stayed singular after diagonal-loading escalation."""


class InfeasibleSceneError(RuntimeError):
    pass
