"""Tangent Matérn models for tangential vector fields on the sphere."""

from .covariance import (FAMILIES, CurlFree, DivFree, ParsBmDirect, Tmm, build_model,
                         cov_canonical, cov_matrix, cross_matrix)
from .exceptions import (EstimationError, GridError, NotPositiveDefiniteError,
                         ParameterError, PoleError, TangentMaternError)
from .inference import FitConfig, FitResult, bootstrap_se, fit_mle
from .likelihood import negative_log_likelihood, nll_dense, nll_dft
from .observations import GridObservations, ObservationSet, as_grid
from .predict import cokrige, crps_gaussian, log_score_gaussian, scores
from .simulate import simulate, simulate_values
from .sphere import Location, fibonacci_grid, from_latlon, regular_grid

__version__ = "0.1.0"
