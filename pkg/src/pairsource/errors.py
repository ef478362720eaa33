"""Exception types shared across the package.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`NumericalError`
subclasses to exit code 3.
"""


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


class ConfigError(ValidationError):
    """A run configuration is incomplete or inconsistent."""


class NumericalError(RuntimeError):
    """A numerical procedure could not produce a trustworthy result."""


class EmptyPostSelectionError(NumericalError):
    """Time-bin post-selection kept no amplitude at all."""


class ResolutionError(NumericalError):
    """A sampling grid is too coarse to resolve the feature being measured."""


class ResourceLimitError(NumericalError):
    """A Monte Carlo run would exceed the configured event cap."""


class FitError(NumericalError):
    """A least-squares fit failed to converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
