"""Exception types shared across the package."""


class CreditEnsError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(CreditEnsError, ValueError):
    """Invalid parameter or malformed input object."""


class DataError(CreditEnsError, RuntimeError):
    """Input data cannot be used (bad CSV, degenerate series, ...)."""


class BracketError(CreditEnsError, RuntimeError):
    """Root bracket does not contain a sign change."""


class ConsistencyError(CreditEnsError, RuntimeError):
    """An internal invariant was violated beyond round-off tolerance."""


class QuadratureError(CreditEnsError, RuntimeError):
    """A quadrature did not converge under adaptive order doubling.

    Carries the last two successive estimates so callers can inspect how far
    apart they were.
    """

    def __init__(self, message, last_estimates=None):
        super().__init__(message)
        self.last_estimates = last_estimates
