"""Exception types shared across the package."""


class SingflowError(Exception):
    """Base class for all package errors."""


class DomainError(SingflowError, ValueError):
    """An argument lies outside the domain of the requested function."""


class OracleUnavailable(SingflowError):
    """The reference oracle cannot produce a trustworthy value."""


class ConvergenceError(SingflowError):
    """A series or iteration failed to converge."""


class TruncationError(SingflowError):
    """A kernel series could not satisfy its tail criterion within the cap.

    The partial sum and the tail bound reached so far are attached so callers
    can decide whether the value is still usable.
    """

    def __init__(self, message, partial=None, tail_bound=None, terms_used=None):
        super().__init__(message)
        self.partial = partial
        self.tail_bound = tail_bound
        self.terms_used = terms_used


class QuadratureError(SingflowError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None, panels=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
        self.panels = panels


class ResolutionError(SingflowError):
    """A sampling grid is too coarse for the requested quantity."""


class ConfigError(SingflowError):
    """A run configuration failed to parse or validate."""
