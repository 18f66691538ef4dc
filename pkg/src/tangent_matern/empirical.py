"""Nonparametric diagnostics: binned empirical covariances, axial lag
curves, co-located u/v correlation and VEOF (SVD) detrending.

All covariance estimates assume zero-mean data (detrend first) and average
products over replicates.
"""

from dataclasses import dataclass

import numpy as np
from statsmodels.nonparametric.smoothers_lowess import lowess

from . import sphere
from .observations import GridObservations, ObservationSet, as_grid

COMPONENT_PAIRS = (("u", "u"), ("v", "v"), ("u", "v"))


@dataclass
class BinnedCovariance:
    """Empirical covariance by great-circle distance bin (radians).

    Row 0 is the zero-distance bin (``lo = hi = 0``); the remaining rows are
    equal-width bins ``(lo, hi]``.  Empty bins hold NaN.  ``se`` is the
    standard error of ``mean`` across replicates.
    """

    lo: np.ndarray
    hi: np.ndarray
    count: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    se: np.ndarray


def _pair_products(values, i, j, a, b):
    """Per-replicate products y_a(s_i) y_b(s_j), symmetrised for a != b."""
    if a == b:
        return values[:, i, a] * values[:, j, a]
    return 0.5 * (values[:, i, a] * values[:, j, b] + values[:, j, a] * values[:, i, b])


def empirical_cov_gcd(obs, bin_edges=None, n_bins=40):
    """Binned empirical (cross-)covariances against great-circle distance.

    Each unordered pair of locations (including a location with itself)
    contributes once per replicate.  For the u-v pair both orderings are
    averaged, since distance carries no direction.

    Parameters
    ----------
    obs : ObservationSet or GridObservations
    bin_edges : array_like, optional
        Increasing edges in radians starting at 0; default ``n_bins``
        equal-width bins up to the largest observed distance.

    Returns
    -------
    dict mapping ("u", "u"), ("v", "v"), ("u", "v") to BinnedCovariance
    """
    if isinstance(obs, GridObservations):
        obs = obs.to_observation_set()
    xyz, _, _ = sphere.as_arrays(obs.locations)
    iu, ju = np.triu_indices(obs.n)
    dist = sphere.great_circle_distance_xyz(xyz[iu], xyz[ju])
    if bin_edges is None:
        top = float(dist.max()) if dist.size else 0.0
        bin_edges = np.linspace(0.0, top if top > 0 else 1.0, n_bins + 1)
    edges = np.asarray(bin_edges, dtype=float)
    if edges[0] != 0 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must start at 0 and increase strictly")
    nb = edges.size - 1
    # bin 0: zero distance; bins 1..nb: (edges[k-1], edges[k]]
    idx = np.where(dist == 0, 0, np.searchsorted(edges, dist, side="left"))
    keep = idx <= nb
    idx, iu, ju = idx[keep], iu[keep], ju[keep]
    count = np.bincount(idx, minlength=nb + 1)
    values = obs.values
    n_reps = obs.n_reps
    out = {}
    names = {"u": 0, "v": 1}
    for pa, pb in COMPONENT_PAIRS:
        prod = _pair_products(values, iu, ju, names[pa], names[pb])
        rep_means = np.full((n_reps, nb + 1), np.nan)
        with np.errstate(invalid="ignore"):
            for r in range(n_reps):
                rep_means[r] = np.bincount(idx, prod[r], nb + 1) / count
        pair_mean = prod.mean(axis=0)
        mean = np.full(nb + 1, np.nan)
        median = np.full(nb + 1, np.nan)
        se = np.full(nb + 1, np.nan)
        order = np.argsort(idx, kind="stable")
        splits = np.split(pair_mean[order], np.cumsum(count)[:-1])
        for k in range(nb + 1):
            if count[k] == 0:
                continue
            mean[k] = rep_means[:, k].mean()
            median[k] = np.median(splits[k])
            if n_reps > 1:
                se[k] = rep_means[:, k].std(ddof=1) / np.sqrt(n_reps)
            elif count[k] > 1:
                se[k] = prod[0, idx == k].std(ddof=1) / np.sqrt(count[k])
        lo = np.concatenate([[0.0], edges[:-1]])
        hi = np.concatenate([[0.0], edges[1:]])
        out[(pa, pb)] = BinnedCovariance(lo, hi, count, mean, median, se)
    return out


@dataclass
class AxialCovariance:
    """Lag curves between two latitude rings.

    ``cov[k, a, b]`` estimates Cov(Y_a(theta_s, phi + lag_k), Y_b(theta_t, phi)).
    """

    lat_s: float
    lat_t: float
    lags: np.ndarray
    cov: np.ndarray

    def at(self, dphi):
        """Curve value at any longitude lag (radians), using periodicity."""
        n = self.lags.size
        k = np.rint(np.asarray(dphi) * n / (2 * np.pi)).astype(int) % n
        return self.cov[k]


def empirical_cov_axial(obs, lat_s, lat_t):
    """Empirical covariance curves against longitude lag for two rings.

    Parameters
    ----------
    obs : GridObservations, or an ObservationSet on a full-longitude grid
    lat_s, lat_t : float
        Latitudes (degrees) of the two rings; must be grid latitudes.
    """
    grid_obs = as_grid(obs)
    grid = grid_obs.grid
    i, j = grid.lat_index(lat_s), grid.lat_index(lat_t)
    ys = grid_obs.values[:, i]  # (R, n_lon, 2)
    yt = grid_obs.values[:, j]
    n_lon = grid.n_lon
    cov = np.empty((n_lon, 2, 2))
    for k in range(n_lon):
        shifted = np.roll(ys, -k, axis=1)  # shifted[:, l] = ys[:, l + k]
        cov[k] = np.einsum("rla,rlb->ab", shifted, yt) / (ys.shape[0] * n_lon)
    return AxialCovariance(float(lat_s), float(lat_t), grid.phi_values.copy(), cov)


@dataclass
class ColocatedCorrelation:
    """Per-location Corr(u, v) across replicates (NaN where undefined) and
    smoothed latitude / longitude profiles."""

    lat_deg: np.ndarray
    lon_deg: np.ndarray
    corr: np.ndarray
    lat_profile: np.ndarray
    lon_profile: np.ndarray


def _smooth(x, y, frac):
    ok = np.isfinite(y)
    if ok.sum() < 3:
        return np.empty((0, 2))
    fit = lowess(y[ok], x[ok], frac=frac, it=0)
    _, first = np.unique(fit[:, 0], return_index=True)
    return fit[first]


def colocated_crosscorr(obs, frac=0.5):
    """Pearson correlation of u and v at each location across replicates.

    The profiles are local linear fits with tricube weights (lowess
    without robustness iterations) on span ``frac``; each is an
    ``(m, 2)`` array of (coordinate, smoothed correlation).
    """
    if isinstance(obs, GridObservations):
        obs = obs.to_observation_set()
    if obs.n_reps < 3:
        raise ValueError("co-located correlation needs at least 3 replicates")
    u = obs.values[:, :, 0] - obs.values[:, :, 0].mean(axis=0)
    v = obs.values[:, :, 1] - obs.values[:, :, 1].mean(axis=0)
    su = np.sqrt(np.sum(u * u, axis=0))
    sv = np.sqrt(np.sum(v * v, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.sum(u * v, axis=0) / (su * sv)
    corr[(su == 0) | (sv == 0)] = np.nan
    lat = np.array([loc.lat_deg for loc in obs.locations])
    lon = np.array([loc.lon_deg for loc in obs.locations])
    return ColocatedCorrelation(lat, lon, corr, _smooth(lat, corr, frac), _smooth(lon, corr, frac))


@dataclass
class VeofDecomposition:
    """SVD of the column-centred ``T x 2N`` field.

    ``temporal[:, k]`` and ``spatial_u[:, k]``, ``spatial_v[:, k]`` are the
    k-th temporal and spatial modes; ``K`` modes were removed.
    """

    singular_values: np.ndarray
    temporal: np.ndarray
    spatial_u: np.ndarray
    spatial_v: np.ndarray
    column_means: np.ndarray
    explained: np.ndarray
    K: int

    @property
    def spatial(self):
        return np.vstack([self.spatial_u, self.spatial_v])


def veof_detrend(field, target_fraction=None, K=None):
    """Remove the leading vector EOFs from a space-time field.

    Parameters
    ----------
    field : array_like
        ``T x 2N``: u at N locations, then v at the same locations.
    target_fraction : float, optional
        Keep the smallest K whose modes explain at least this fraction of
        the total squared singular values.
    K : int, optional
        Number of modes to remove (exclusive with ``target_fraction``).

    Returns
    -------
    (residual, VeofDecomposition)
    """
    x = np.asarray(field, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2 or x.shape[1] % 2:
        raise ValueError("field must be T x 2N with T >= 2 and N >= 1")
    if (K is None) == (target_fraction is None):
        raise ValueError("give exactly one of K or target_fraction")
    n_t = x.shape[0]
    means = x.mean(axis=0)
    xc = x - means
    u, d, vt = np.linalg.svd(xc, full_matrices=False)
    total = np.sum(d * d)
    explained = d * d / total if total > 0 else np.zeros_like(d)
    if target_fraction is not None:
        if not 0 < target_fraction <= 1:
            raise ValueError("target_fraction must be in (0, 1]")
        cum = np.cumsum(explained)
        K = int(np.searchsorted(cum, target_fraction - 1e-12) + 1)
        K = min(K, d.size)
    if not 0 <= K <= n_t:
        raise ValueError(f"K = {K} must lie between 0 and T = {n_t}")
    K = min(K, d.size)
    resid = xc - (u[:, :K] * d[:K]) @ vt[:K]
    n = x.shape[1] // 2
    dec = VeofDecomposition(d, u, vt[:, :n].T, vt[:, n:].T, means, explained, int(K))
    return resid, dec


def field_from_observations(obs):
    """``T x 2N`` matrix (u columns, then v) from replicated observations."""
    if isinstance(obs, GridObservations):
        obs = obs.to_observation_set()
    return np.hstack([obs.values[:, :, 0], obs.values[:, :, 1]])


def observations_from_field(field, locations, times=None):
    x = np.asarray(field, dtype=float)
    n = x.shape[1] // 2
    return ObservationSet(locations, np.stack([x[:, :n], x[:, n:]], axis=-1), times)
