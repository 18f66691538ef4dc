"""Simple cokriging of (u, v) and proper scoring rules for its predictions."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import ndtr

from .covariance import cov_matrix, cross_matrix, signal_matrix
from .exceptions import NotPositiveDefiniteError
from .simulate import make_rng

_LOG_2PI = math.log(2.0 * math.pi)
_BATCH = 2048


@dataclass
class Prediction:
    """Cokriging output at ``n_t`` target locations.

    ``mean`` is ``(n_reps, n_t, 2)`` (one row per training replicate);
    ``sd`` is ``(n_t, 2)`` and refers to the nugget-free signal; ``cov``
    is the optional joint ``2n_t x 2n_t`` signal covariance in interleaved
    order.  ``nugget`` holds (tau1^2, tau2^2) of the model used.
    """

    locations: list
    mean: np.ndarray
    sd: np.ndarray
    nugget: np.ndarray
    cov: np.ndarray = None

    def observation_sd(self):
        """Predictive sd of a new noisy observation, sqrt(sd^2 + tau^2)."""
        return np.sqrt(self.sd ** 2 + self.nugget)


def cokrige(train, m, targets, full_cov=False):
    """Simple (zero-mean) cokriging of the signal at ``targets``.

    Parameters
    ----------
    train : ObservationSet or None
        Training data; ``None`` or no locations gives the prior.
    m : CovarianceModel
    targets : list of Location
    full_cov : bool
        Also return the joint predictive covariance.
    """
    targets = list(targets)
    n_t = len(targets)
    prior = m.variance()
    prior_sd = np.sqrt(np.diag(prior))
    if train is None or train.n == 0:
        n_reps = 1 if train is None else train.n_reps
        cov = signal_matrix(targets, m) if full_cov and n_t else None
        return Prediction(targets, np.zeros((n_reps, n_t, 2)),
                          np.tile(prior_sd, (n_t, 1)), m.nugget, cov)
    sigma11 = cov_matrix(train.locations, m)
    try:
        chol = linalg.cholesky(sigma11, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "training covariance is singular; add a nugget or remove duplicate sites") from None
    zy = linalg.solve_triangular(chol, train.flat().T, lower=True, check_finite=False)
    mean = np.empty((train.n_reps, 2 * n_t))
    var = np.empty(2 * n_t)
    w_all = [] if full_cov else None
    for lo in range(0, n_t, _BATCH):
        hi = min(lo + _BATCH, n_t)
        k21 = cross_matrix(targets[lo:hi], train.locations, m)
        w = linalg.solve_triangular(chol, k21.T, lower=True, check_finite=False)
        mean[:, 2 * lo:2 * hi] = (w.T @ zy).T
        var[2 * lo:2 * hi] = np.tile(np.diag(prior), hi - lo) - np.sum(w * w, axis=0)
        if full_cov:
            w_all.append(w)
    sd = np.sqrt(np.maximum(var, 0.0)).reshape(n_t, 2)
    cov = None
    if full_cov:
        w = np.hstack(w_all)
        cov = signal_matrix(targets, m) - w.T @ w
    return Prediction(targets, mean.reshape(train.n_reps, n_t, 2), sd, m.nugget, cov)


def crps_gaussian(y, mu, sigma):
    """Continuous ranked probability score of N(mu, sigma^2) at ``y``.

    sigma * [z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)],  z = (y - mu)/sigma.
    """
    y, mu, sigma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, mu, sigma)))
    if np.any(~(sigma > 0)):
        raise ValueError("crps_gaussian requires sigma > 0")
    z = (y - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out = sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - 1.0 / math.sqrt(math.pi))
    return float(out) if out.ndim == 0 else out


def log_score_gaussian(y, mu, sigma):
    """Negative log density of N(mu, sigma^2) at ``y``; sigma = 0 gives
    +inf on a mismatch and -inf on an exact hit."""
    y, mu, sigma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (y, mu, sigma)))
    out = np.empty(y.shape)
    pos = sigma > 0
    z = (y[pos] - mu[pos]) / sigma[pos]
    out[pos] = 0.5 * _LOG_2PI + np.log(sigma[pos]) + 0.5 * z * z
    out[~pos] = np.where(y[~pos] == mu[~pos], -np.inf, np.inf)
    return float(out) if out.ndim == 0 else out


def _crps_any(y, mu, sigma):
    out = np.abs(y - mu).astype(float)
    pos = sigma > 0
    out[pos] = crps_gaussian(y[pos], mu[pos], sigma[pos])
    return out


def scores(pred, truth, observation_noise=True):
    """MSPE, MAE, LogS and CRPS, averaged per component and pooled.

    Parameters
    ----------
    pred : Prediction
    truth : array_like
        ``(n_t, 2)`` or ``(n_reps, n_t, 2)``, aligned with ``pred.mean``.
    observation_noise : bool
        Score LogS and CRPS against sqrt(sd^2 + tau^2), as appropriate
        for held-out noisy observations.

    Returns
    -------
    dict
        ``{"u": {...}, "v": {...}, "pooled": {...}}`` with keys
        ``MSPE``, ``MAE``, ``LogS``, ``CRPS``; lower is better.
    """
    truth = np.asarray(truth, dtype=float)
    mean = pred.mean
    if truth.ndim == 2:
        truth = truth[None]
    if truth.shape != mean.shape:
        raise ValueError(f"truth shape {truth.shape} does not match predictions {mean.shape}")
    sd = pred.observation_sd() if observation_noise else pred.sd
    sd = np.broadcast_to(sd, mean.shape)
    err = truth - mean
    per = {
        "MSPE": err ** 2,
        "MAE": np.abs(err),
        "LogS": log_score_gaussian(truth, mean, sd),
        "CRPS": _crps_any(truth, mean, sd),
    }
    out = {}
    for label, sl in (("u", np.s_[..., 0]), ("v", np.s_[..., 1]), ("pooled", np.s_[...])):
        out[label] = {k: float(np.mean(v[sl])) for k, v in per.items()}
    return out


def band_holdout(locations, seed, band_width_deg=30.0, train_fraction=0.5):
    """Training/target split that mixes short and long range prediction.

    A longitude band of width ``band_width_deg`` is centred at a random
    longitude; ``round(train_fraction * n)`` training sites are drawn at
    random from outside the band, and all remaining sites (including the
    whole band) are prediction targets.

    Returns
    -------
    (train_idx, target_idx) : sorted integer arrays
    """
    n = len(locations)
    rng = make_rng(seed, 2)
    centre = rng.uniform(0.0, 360.0)
    lon = np.array([loc.lon_deg for loc in locations]) % 360.0
    offset = (lon - centre + 180.0) % 360.0 - 180.0
    outside = np.flatnonzero(np.abs(offset) > 0.5 * band_width_deg)
    n_train = min(int(round(train_fraction * n)), outside.size)
    train = np.sort(rng.choice(outside, size=n_train, replace=False))
    target = np.setdiff1d(np.arange(n), train)
    return train, target


def standardized_errors(pred, truth, observation_noise=True):
    sd = pred.observation_sd() if observation_noise else pred.sd
    return (np.asarray(truth) - pred.mean) / sd
