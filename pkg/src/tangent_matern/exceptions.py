class TangentMaternError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(TangentMaternError, ValueError):
    """A parameter violates its constraints."""


class PoleError(TangentMaternError, ValueError):
    """The canonical (east, north) frame is undefined at the poles."""


class NotPositiveDefiniteError(TangentMaternError, ArithmeticError):
    """A covariance matrix failed its Cholesky factorization.

    ``min_eigenvalue`` is filled in when it was computed.
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class GridError(TangentMaternError, ValueError):
    """Observations do not sit on a full-longitude regular grid."""


class EstimationError(TangentMaternError, RuntimeError):
    """Maximum-likelihood fitting could not proceed."""
