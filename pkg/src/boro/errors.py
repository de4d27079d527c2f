"""Exception types shared across the package."""

from __future__ import annotations


class BoroError(Exception):
    """Base class for package errors."""


class EmptyContextWindow(BoroError):
    """All smoother weights vanished at the query context.

    Typically means a compact-support smoother with a bandwidth too small
    for the covariate spread around the context.
    """


class SingularCovariance(BoroError):
    """Empirical covariate covariance is not invertible."""


class SolverError(BoroError):
    """A numerical solve failed or did not converge.

    Carries the best iterate found so far (if any) for diagnosis.
    """

    def __init__(self, message: str, iterate=None):
        super().__init__(message)
        self.iterate = iterate


class UnsupportedDistance(BoroError):
    """Requested a model distance that is declared but not implemented."""


class ConfigError(BoroError):
    """Bad configuration file or override."""


class ParseError(BoroError):
    """Malformed input data; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line
