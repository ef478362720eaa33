"""Simulation toolkit for a time-bin-to-polarization entangled photon-pair source."""

from .errors import ConfigError, FitError, NumericalError, ResolutionError, ResourceLimitError, ValidationError

__all__ = ["ConfigError", "FitError", "NumericalError", "ResolutionError", "ResourceLimitError", "ValidationError"]
__version__ = "0.1.0"
