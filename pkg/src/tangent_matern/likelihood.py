"""Gaussian negative log-likelihood, dense and longitude-FFT paths.

Both paths return

    sum over replicates of  1/2 log|Sigma| + 1/2 y^T Sigma^{-1} y

(no 2*pi constant).  On a grid whose longitudes cover the whole circle the
covariance between two latitude rings is circulant in longitude, so a
unitary DFT along longitude turns Sigma into ``n_lon`` independent Hermitian
blocks of size ``2 n_lat``; block ``m`` is indexed by (component, latitude).

An optional mean ``X beta`` can be profiled out by generalized least
squares; ``beta`` is shared by all replicates.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import sphere
from .covariance import cov_matrix, location_pairs, pair_geometry
from .exceptions import GridError, NotPositiveDefiniteError
from .observations import GridObservations, ObservationSet, as_grid


class _EvalCounter:
    """Counts 2x2-entry kernel evaluations made by :func:`build_spectral`."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0


spectral_kernel_evaluations = _EvalCounter()


def colatitude_design(theta):
    """Mean design b0 + b1*theta + b2*theta^2 per component.

    Returns ``(n, 2, 6)``: columns 0-2 drive u, columns 3-5 drive v.
    """
    theta = np.asarray(theta, dtype=float)
    basis = np.stack([np.ones_like(theta), theta, theta ** 2], axis=-1)
    out = np.zeros(theta.shape + (2, 6))
    out[..., 0, :3] = basis
    out[..., 1, 3:] = basis
    return out


def _profiled(yy, xy, xx, n_reps):
    """Total quadratic form after GLS profiling, and beta_hat."""
    if xx is None:
        return float(np.sum(yy)), None
    beta = np.linalg.solve(n_reps * xx, xy.sum(axis=1))
    quad = np.sum(yy) - 2.0 * beta @ xy.sum(axis=1) + n_reps * beta @ xx @ beta
    return float(quad), beta


# --- dense -----------------------------------------------------------------


def _dense_parts(sigma, y, x):
    """Factorises ``sigma`` in place (callers pass a scratch matrix)."""
    try:
        # sigma is symmetric, so its transpose is the same matrix in Fortran order
        chol = linalg.cholesky(sigma.T, lower=True, overwrite_a=True, check_finite=False)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance matrix is not positive definite") from None
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    zy = linalg.solve_triangular(chol, y.T, lower=True, check_finite=False)
    yy = np.sum(zy * zy, axis=0)
    if x is None:
        return logdet, yy, None, None
    zx = linalg.solve_triangular(chol, x, lower=True, check_finite=False)
    return logdet, yy, zx.T @ zy, zx.T @ zx


def nll_dense(obs, m, design=None, return_beta=False, pairs=None):
    """Negative log-likelihood by Cholesky of the full 2n x 2n matrix.

    Parameters
    ----------
    obs : ObservationSet or GridObservations
    m : CovarianceModel
    design : ndarray, optional
        ``(n, 2, p)`` mean design (see :func:`colatitude_design`); when
        given, the mean coefficients are profiled out.
    pairs : LocationPairs, optional
        Precomputed geometry of ``obs.locations``.
    """
    if isinstance(obs, GridObservations):
        obs = obs.to_observation_set()
    sigma = cov_matrix(obs.locations, m, pairs)
    x = None if design is None else np.asarray(design).reshape(2 * obs.n, -1)
    logdet, yy, xy, xx = _dense_parts(sigma, obs.flat(), x)
    quad, beta = _profiled(yy, xy, xx, obs.n_reps)
    value = 0.5 * obs.n_reps * logdet + 0.5 * quad
    return (value, beta) if return_beta else value


# --- spectral ----------------------------------------------------------------


@dataclass
class SpectralBlocks:
    """Per-frequency covariance blocks; ``lambdas[m]`` is ``2n_lat x 2n_lat``
    Hermitian with row index ``component * n_lat + latitude``."""

    grid: sphere.RegularGrid
    lambdas: np.ndarray


def ring_geometry(grid):
    """Pair geometry of (theta_i, phi_k) against (theta_j, 0), shaped
    (n_lat, n_lat, n_lon)."""
    theta = np.asarray(grid.theta_values)
    phi = grid.phi_values
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    xyz = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
    frames = sphere._canonical_rows(th, ph)
    return pair_geometry(xyz[:, None, :, :], frames[:, None, :, :, :],
                         xyz[None, :, :1, :], frames[None, :, :1, :, :])


def circulant_rows(grid, m, geometry=None):
    """c[i, j, k, a, b] = Cov(Y_a(theta_i, phi_k), Y_b(theta_j, 0)), nugget included."""
    if geometry is None:
        geometry = ring_geometry(grid)
    rows = m.blocks_from_geometry(geometry)
    spectral_kernel_evaluations.count += rows.size
    idx = np.arange(grid.n_lat)
    rows[idx, idx, 0, 0, 0] += m.nugget[0]
    rows[idx, idx, 0, 1, 1] += m.nugget[1]
    return rows


def build_spectral(grid, m, geometry=None):
    """Diagonalise the longitude-circulant structure of the covariance.

    ``grid`` must be a :class:`~tangent_matern.sphere.RegularGrid` (full
    longitude circle); other location sets need :func:`nll_dense`.
    ``geometry`` (from :func:`ring_geometry`) can be reused across models.
    """
    if not isinstance(grid, sphere.RegularGrid):
        raise GridError("spectral path needs a full-longitude RegularGrid; use nll_dense")
    rows = circulant_rows(grid, m, geometry)
    lam = np.fft.fft(rows, axis=2)
    n_lat, n_lon = grid.n_lat, grid.n_lon
    lam = lam.transpose(2, 3, 0, 4, 1).reshape(n_lon, 2 * n_lat, 2 * n_lat)
    return SpectralBlocks(grid, lam)


def transform_grid_values(values):
    """Unitary DFT along longitude.

    ``values`` is ``(R, n_lat, n_lon, 2)``; returns ``(n_lon, 2 n_lat, R)``
    complex coefficients ordered like the rows of ``SpectralBlocks.lambdas``.
    """
    values = np.asarray(values, dtype=float)
    n_reps, n_lat, n_lon, _ = values.shape
    coef = np.fft.fft(values, axis=2) / np.sqrt(n_lon)
    return coef.transpose(2, 3, 1, 0).reshape(n_lon, 2 * n_lat, n_reps)


def _spectral_parts(blocks, ty, tx, use_symmetry):
    lam = blocks.lambdas
    n_lon = lam.shape[0]
    weights = np.ones(n_lon)
    if use_symmetry:
        keep = n_lon // 2 + 1
        weights = np.full(keep, 2.0)
        weights[0] = 1.0
        if n_lon % 2 == 0:
            weights[-1] = 1.0
        lam, ty = lam[:keep], ty[:keep]
        tx = None if tx is None else tx[:keep]
    try:
        chol = np.linalg.cholesky(lam)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "a spectral covariance block is not positive definite") from None
    diag = np.real(np.diagonal(chol, axis1=1, axis2=2))
    logdet = 2.0 * np.sum(weights[:, None] * np.log(diag))
    zy = np.linalg.solve(chol, ty)
    yy = np.einsum("m,mir->r", weights, np.abs(zy) ** 2)
    if tx is None:
        return logdet, yy, None, None
    zx = np.linalg.solve(chol, tx)
    xy = np.real(np.einsum("m,mip,mir->pr", weights, zx.conj(), zy))
    xx = np.real(np.einsum("m,mip,miq->pq", weights, zx.conj(), zx))
    return logdet, yy, xy, xx


def nll_dft(grid_obs, m, design=None, return_beta=False, use_symmetry=False):
    """Negative log-likelihood through per-frequency Hermitian Cholesky.

    Parameters
    ----------
    grid_obs : GridObservations
    m : CovarianceModel
    design : ndarray, optional
        ``(n_lat, n_lon, 2, p)`` mean design.
    use_symmetry : bool
        Only factor frequencies 0..n_lon/2, using the conjugate symmetry of
        real data.  Off by default.
    """
    if isinstance(grid_obs, ObservationSet):
        raise GridError("nll_dft needs GridObservations on a full-longitude grid; "
                        "use nll_dense for scattered locations")
    blocks = build_spectral(grid_obs.grid, m)
    ty = transform_grid_values(grid_obs.values)
    tx = None
    if design is not None:
        design = np.asarray(design, dtype=float)
        tx = transform_grid_values(np.moveaxis(design, -1, 0))
    logdet, yy, xy, xx = _spectral_parts(blocks, ty, tx, use_symmetry)
    quad, beta = _profiled(yy, xy, xx, grid_obs.n_reps)
    value = 0.5 * grid_obs.n_reps * logdet + 0.5 * quad
    return (value, beta) if return_beta else value


def spectral_logdets(blocks):
    """log det of every block, for diagnostics."""
    chol = np.linalg.cholesky(blocks.lambdas)
    return 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=1, axis2=2))), axis=1)


class LikelihoodProblem:
    """Negative log-likelihood of fixed data as a function of the model.

    Everything that does not depend on the parameters (pair geometry,
    transformed observations, mean design) is prepared once.

    Parameters
    ----------
    data : ObservationSet or GridObservations
    method : {"auto", "dense", "spectral"}
        "auto" uses the spectral path whenever the locations form a
        full-longitude grid.
    covariates : bool
        Profile out a per-component quadratic mean in colatitude.
    """

    def __init__(self, data, method="auto", covariates=False):
        if method not in ("auto", "dense", "spectral"):
            raise ValueError(f"unknown likelihood method {method!r}")
        if method != "dense":
            try:
                data = as_grid(data)
            except GridError:
                if method == "spectral":
                    raise
        self.method = "spectral" if isinstance(data, GridObservations) and method != "dense" \
            else "dense"
        self.data = data
        self.covariates = covariates
        if self.method == "spectral":
            grid = data.grid
            self.grid = grid
            self._geometry = ring_geometry(grid)
            self._ty = transform_grid_values(data.values)
            self._tx = None
            if covariates:
                theta = np.repeat(np.asarray(grid.theta_values), grid.n_lon)
                x = colatitude_design(theta).reshape(grid.n_lat, grid.n_lon, 2, -1)
                self._tx = transform_grid_values(np.moveaxis(x, -1, 0))
        else:
            obs = data.to_observation_set() if isinstance(data, GridObservations) else data
            self.obs = obs
            self._pairs = location_pairs(obs.locations)
            self._y = obs.flat()
            self._x = None
            if covariates:
                _, theta, _ = sphere.as_arrays(obs.locations)
                self._x = colatitude_design(theta).reshape(2 * obs.n, -1)

    @property
    def n_reps(self):
        return self.data.n_reps

    def __call__(self, m, return_beta=False):
        if self.method == "spectral":
            blocks = build_spectral(self.grid, m, self._geometry)
            parts = _spectral_parts(blocks, self._ty, self._tx, False)
        else:
            sigma = cov_matrix(self.obs.locations, m, self._pairs)
            parts = _dense_parts(sigma, self._y, self._x)
        logdet, yy, xy, xx = parts
        quad, beta = _profiled(yy, xy, xx, self.n_reps)
        value = 0.5 * self.n_reps * logdet + 0.5 * quad
        return (value, beta) if return_beta else value


def negative_log_likelihood(data, m, method="auto", covariates=False):
    """One-off evaluation; see :class:`LikelihoodProblem`."""
    return LikelihoodProblem(data, method, covariates)(m)
