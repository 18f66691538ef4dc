"""Cross-covariances of tangential vector fields in canonical (east, north)
coordinates.

Four model families are provided:

``Tmm``
    gradient of Z1 plus surface curl of Z2, (Z1, Z2) parsimonious bivariate
    Matérn; the tangent Matérn model.
``CurlFree`` / ``DivFree``
    gradient-only or curl-only fields from a single Matérn potential.
``ParsBmDirect``
    the parsimonious bivariate Matérn applied directly to (u, v) at chordal
    distance; the comparison baseline.

All vector parameterisations use ``inv_a = 1/a``, matching the order
(sigma1, sigma2, rho12, nu1, nu2, inv_a, tau1, tau2) for the bivariate
families and (sigma, nu, inv_a, tau1, tau2) for the single-potential ones.

Dense matrices interleave components per location: rows 2i and 2i+1 hold
u and v at location i.
"""

import threading
import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import sphere
from .exceptions import ParameterError
from .kernels import (HESSIAN_ZERO_TOL, MaternParams, ParsBivariateMaternParams,
                      hessian_k, matern_values_many, radial_fg_many)

def _check_tau(tau1, tau2):
    for name, v in (("tau1", tau1), ("tau2", tau2)):
        if not (v >= 0 and np.isfinite(v)):
            raise ParameterError(f"{name} must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class TmmParams:
    bm: ParsBivariateMaternParams
    tau1: float = 0.0
    tau2: float = 0.0

    def __post_init__(self):
        _check_tau(self.tau1, self.tau2)
        MaternParams(self.bm.nu1, self.bm.a).require_differentiable()
        MaternParams(self.bm.nu2, self.bm.a).require_differentiable()

    @classmethod
    def from_theta(cls, theta):
        s1, s2, rho, nu1, nu2, inv_a, t1, t2 = (float(v) for v in theta)
        if not inv_a > 0:
            raise ParameterError(f"1/a must be positive, got {inv_a}")
        return cls(ParsBivariateMaternParams(s1, s2, rho, nu1, nu2, 1.0 / inv_a), t1, t2)

    @property
    def theta(self):
        b = self.bm
        return np.array([b.sigma1, b.sigma2, b.rho12, b.nu1, b.nu2, 1.0 / b.a,
                         self.tau1, self.tau2])


class CovarianceModel:
    """Common interface of the four model families."""

    family = ""
    param_names = ()

    @property
    def nugget(self):
        return np.array([self.tau1 ** 2, self.tau2 ** 2])

    def signal_blocks(self, xyz_s, frame_s, xyz_t, frame_t):
        """Nugget-free 2x2 covariance blocks, broadcasting over leading axes."""
        return self.blocks_from_geometry(pair_geometry(xyz_s, frame_s, xyz_t, frame_t))

    def blocks_from_geometry(self, g):
        """(..., 2, 2) signal blocks for a PairGeometry; always a new array."""
        raise NotImplementedError

    def to_vector(self):
        raise NotImplementedError

    @classmethod
    def from_vector(cls, vec):
        raise NotImplementedError

    def variance(self):
        """Co-located signal covariance (2x2), constant over the sphere."""
        x = np.array([1.0, 0.0, 0.0])
        fr = sphere._canonical_rows(np.array(np.pi / 2), np.array(0.0))
        return self.signal_blocks(x, fr, x, fr)


@dataclass(frozen=True)
class PairGeometry:
    """Separation quantities shared by every kernel evaluation on a fixed
    set of location pairs: chordal distance ``r``, ``d = T_s T_t^T`` and
    ``pq = (T_s h)(T_t h)^T`` with ``h = s - t``."""

    r: np.ndarray
    d: np.ndarray
    pq: np.ndarray


def pair_geometry(xyz_s, frame_s, xyz_t, frame_t):
    h = xyz_s - xyz_t
    r = np.sqrt(np.sum(h * h, axis=-1))
    if frame_s is None:
        return PairGeometry(r, None, None)
    d = np.einsum("...ik,...jk->...ij", frame_s, frame_t)
    # T_s T_s^T is the identity; pin it exactly at coincident points
    d = np.where((r == 0)[..., None, None], np.eye(2), d)
    p = np.einsum("...ik,...k->...i", frame_s, h)
    q = np.einsum("...ik,...k->...i", frame_t, h)
    return PairGeometry(r, d, p[..., :, None] * q[..., None, :])


class _KernelCache:
    """Small LRU store of kernel arrays keyed by (geometry, kind, nu, a).

    Finite-difference gradients perturb sigma, rho and tau far more often
    than nu and a; those evaluations reuse the Bessel-dependent arrays.
    The geometry object itself is kept in the entry, so identity checks
    cannot be fooled by a recycled ``id``.
    """

    def __init__(self, size=8):
        self.size = size
        self._store = OrderedDict()
        self._lock = threading.Lock()

    def get_many(self, g, kind, nus, a, compute):
        """Arrays for each nu in ``nus``; ``compute(missing_nus)`` fills
        the misses in one call so they can share work."""
        keys = [(id(g), kind, float(nu), float(a)) for nu in nus]
        found = {}
        with self._lock:
            for key in keys:
                hit = self._store.get(key)
                if hit is not None and hit[0] is g:
                    self._store.move_to_end(key)
                    found[key] = hit[1]
        missing = list(dict.fromkeys(k for k in keys if k not in found))
        if missing:
            values = compute([k[2] for k in missing])
            with self._lock:
                for key, value in zip(missing, values):
                    found[key] = value
                    self._store[key] = (g, value)
                while len(self._store) > self.size:
                    self._store.popitem(last=False)
        return [found[k] for k in keys]

    def clear(self):
        with self._lock:
            self._store.clear()


kernel_cache = _KernelCache()


def _projected_hessians(g, nus, a):
    """T_s K(s - t; nu, a) T_t^T for each nu (read-only; may be shared via
    the cache)."""
    def compute(missing):
        r = np.where(g.r < HESSIAN_ZERO_TOL, 0.0, g.r)
        return [f[..., None, None] * g.d + gg[..., None, None] * g.pq
                for f, gg in radial_fg_many(r, missing, a)]
    return kernel_cache.get_many(g, "hess", nus, a, compute)


def _projected_hessian(g, nu, a):
    return _projected_hessians(g, [nu], a)[0]


def _materns_cached(g, nus, a):
    return kernel_cache.get_many(g, "matern", nus, a,
                                 lambda missing: matern_values_many(g.r, missing, a))


def _rotate_both(m):
    """J m J^T with J the quarter turn [[0, -1], [1, 0]]."""
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1]
    out[..., 0, 1] = -m[..., 1, 0]
    out[..., 1, 0] = -m[..., 0, 1]
    out[..., 1, 1] = m[..., 0, 0]
    return out


def _rotate_sym(m):
    """m J^T + J m."""
    out = np.empty_like(m)
    out[..., 0, 0] = -(m[..., 0, 1] + m[..., 1, 0])
    out[..., 0, 1] = m[..., 0, 0] - m[..., 1, 1]
    out[..., 1, 0] = out[..., 0, 1]
    out[..., 1, 1] = m[..., 0, 1] + m[..., 1, 0]
    return out


@dataclass(frozen=True)
class Tmm(CovarianceModel):
    params: TmmParams

    family = "tmm"
    param_names = ("sigma1", "sigma2", "rho12", "nu1", "nu2", "inv_a", "tau1", "tau2")

    @property
    def tau1(self):
        return self.params.tau1

    @property
    def tau2(self):
        return self.params.tau2

    def blocks_from_geometry(self, g):
        b = self.params.bm
        cross = b.rho12 != 0.0
        hs = _projected_hessians(g, [b.nu1, b.nu2] + ([b.nu12] if cross else []), b.a)
        out = b.sigma1 ** 2 * hs[0]  # new array
        out += b.sigma2 ** 2 * _rotate_both(hs[1])
        if cross:
            out += b.rho12 * b.sigma1 * b.sigma2 * _rotate_sym(hs[2])
        return -out

    def to_vector(self):
        return self.params.theta

    @classmethod
    def from_vector(cls, vec):
        return cls(TmmParams.from_theta(vec))


@dataclass(frozen=True)
class _SinglePotential(CovarianceModel):
    sigma: float
    matern: MaternParams
    tau1: float = 0.0
    tau2: float = 0.0

    param_names = ("sigma", "nu", "inv_a", "tau1", "tau2")

    def __post_init__(self):
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise ParameterError(f"sigma must be finite and non-negative, got {self.sigma}")
        self.matern.require_differentiable()
        _check_tau(self.tau1, self.tau2)

    def to_vector(self):
        return np.array([self.sigma, self.matern.nu, 1.0 / self.matern.a,
                         self.tau1, self.tau2])

    @classmethod
    def from_vector(cls, vec):
        sigma, nu, inv_a, t1, t2 = (float(v) for v in vec)
        if not inv_a > 0:
            raise ParameterError(f"1/a must be positive, got {inv_a}")
        return cls(sigma, MaternParams(nu, 1.0 / inv_a), t1, t2)


@dataclass(frozen=True)
class CurlFree(_SinglePotential):
    family = "curl"

    def blocks_from_geometry(self, g):
        m = _projected_hessian(g, self.matern.nu, self.matern.a)
        return -self.sigma ** 2 * m


@dataclass(frozen=True)
class DivFree(_SinglePotential):
    family = "div"

    def blocks_from_geometry(self, g):
        m = _projected_hessian(g, self.matern.nu, self.matern.a)
        return -self.sigma ** 2 * _rotate_both(m)


@dataclass(frozen=True)
class ParsBmDirect(CovarianceModel):
    bm: ParsBivariateMaternParams
    tau1: float = 0.0
    tau2: float = 0.0

    family = "parsbm"
    param_names = ("sigma1", "sigma2", "rho12", "nu1", "nu2", "inv_a", "tau1", "tau2")

    def __post_init__(self):
        _check_tau(self.tau1, self.tau2)

    def signal_blocks(self, xyz_s, frame_s, xyz_t, frame_t):
        # only the chordal distance matters; frames are ignored
        return self.blocks_from_geometry(pair_geometry(xyz_s, None, xyz_t, None))

    def blocks_from_geometry(self, g):
        b = self.bm
        r = g.r
        out = np.empty(r.shape + (2, 2))
        m1, m2, m12 = _materns_cached(g, [b.nu1, b.nu2, b.nu12], b.a)
        out[..., 0, 0] = b.sigma1 ** 2 * m1
        out[..., 1, 1] = b.sigma2 ** 2 * m2
        cross = b.rho12 * b.sigma1 * b.sigma2 * m12
        out[..., 0, 1] = cross
        out[..., 1, 0] = cross
        return out

    def to_vector(self):
        b = self.bm
        return np.array([b.sigma1, b.sigma2, b.rho12, b.nu1, b.nu2, 1.0 / b.a,
                         self.tau1, self.tau2])

    @classmethod
    def from_vector(cls, vec):
        s1, s2, rho, nu1, nu2, inv_a, t1, t2 = (float(v) for v in vec)
        if not inv_a > 0:
            raise ParameterError(f"1/a must be positive, got {inv_a}")
        return cls(ParsBivariateMaternParams(s1, s2, rho, nu1, nu2, 1.0 / inv_a), t1, t2)


FAMILIES = {cls.family: cls for cls in (Tmm, CurlFree, DivFree, ParsBmDirect)}


def build_model(family, vec):
    try:
        cls = FAMILIES[family]
    except KeyError:
        raise ParameterError(f"unknown model family {family!r}; "
                             f"choose from {sorted(FAMILIES)}") from None
    return cls.from_vector(vec)


# --- literal 3x3 constructions -------------------------------------------


def cov_curl(s, t, sigma, p):
    """Cross-covariance of the surface gradient of a Matérn potential, in R^3."""
    k = hessian_k(s.xyz - t.xyz, p)
    return -sigma ** 2 * sphere.projector_tangent(s) @ k @ sphere.projector_tangent(t).T


def cov_div(s, t, sigma, p):
    """Cross-covariance of the surface curl of a Matérn potential, in R^3."""
    k = hessian_k(s.xyz - t.xyz, p)
    return -sigma ** 2 * sphere.projector_curl(s) @ k @ sphere.projector_curl(t).T


def cov_tan(s, t, bm):
    """3x3 cross-covariance of gradient(Z1) + curl(Z2) assembled as the
    block product [s1 P_s, s2 Q_s] K6 [s1 P_t, s2 Q_t]^T."""
    h = s.xyz - t.xyz
    k1 = hessian_k(h, MaternParams(bm.nu1, bm.a))
    k2 = hessian_k(h, MaternParams(bm.nu2, bm.a))
    k12 = hessian_k(h, MaternParams(bm.nu12, bm.a))
    big = np.block([[k1, bm.rho12 * k12], [bm.rho12 * k12, k2]])
    left = np.hstack([bm.sigma1 * sphere.projector_tangent(s),
                      bm.sigma2 * sphere.projector_curl(s)])
    right = np.hstack([bm.sigma1 * sphere.projector_tangent(t),
                       bm.sigma2 * sphere.projector_curl(t)])
    return -left @ big @ right.T


# --- canonical-coordinate covariances ------------------------------------


def _frames(locations):
    sphere.check_no_poles(locations)
    xyz, theta, phi = sphere.as_arrays(locations)
    return xyz, sphere._canonical_rows(theta, phi)


def cov_canonical(s, t, m):
    """2x2 covariance of (u, v) at s with (u, v) at t, nugget included when s = t."""
    (xs, fs), (xt, ft) = _frames([s]), _frames([t])
    out = m.signal_blocks(xs[0], fs[0], xt[0], ft[0])
    if np.array_equal(xs[0], xt[0]):
        out = out + np.diag(m.nugget)
    return out


def cov_parsbm_direct(s, t, bm):
    """Baseline 2x2 covariance: bivariate Matérn at chordal distance."""
    return ParsBmDirect(bm).signal_blocks(s.xyz, None, t.xyz, None)


def cross_blocks(locs_a, locs_b, m):
    """Signal covariance between two location sets as an (na, nb, 2, 2) array."""
    xa, fa = _frames(locs_a)
    xb, fb = _frames(locs_b)
    return m.signal_blocks(xa[:, None], fa[:, None], xb[None, :], fb[None, :])


def blocks_to_matrix(blocks):
    """(na, nb, 2, 2) -> (2na, 2nb) with interleaved components."""
    na, nb = blocks.shape[:2]
    return blocks.transpose(0, 2, 1, 3).reshape(2 * na, 2 * nb)


def cross_matrix(locs_a, locs_b, m):
    return blocks_to_matrix(cross_blocks(locs_a, locs_b, m))


def duplicate_pairs(locations):
    xyz, _, _ = sphere.as_arrays(locations)
    _, inverse, counts = np.unique(xyz, axis=0, return_inverse=True, return_counts=True)
    return [np.flatnonzero(inverse.ravel() == k) for k in np.flatnonzero(counts > 1)]


@dataclass(frozen=True)
class LocationPairs:
    """Upper-triangle pair geometry of a location set, reusable across
    parameter values; ``diagonal`` marks the self-pairs (i, i)."""

    n: int
    iu: np.ndarray
    ju: np.ndarray
    geometry: PairGeometry
    has_duplicates: bool
    diagonal: np.ndarray


def location_pairs(locations):
    xyz, frames = _frames(locations)
    n = len(locations)
    iu, ju = np.triu_indices(n)
    g = pair_geometry(xyz[iu], frames[iu], xyz[ju], frames[ju])
    return LocationPairs(n, iu, ju, g, bool(duplicate_pairs(locations)),
                         np.flatnonzero(iu == ju))


def signal_matrix(locations, m, pairs=None):
    """Nugget-free 2n x 2n covariance; only the upper triangle of location
    pairs is evaluated and mirrored, so the result is exactly symmetric.
    ``pairs`` (from :func:`location_pairs`) skips the geometry set-up."""
    if pairs is None:
        pairs = location_pairs(locations)
    n = pairs.n
    blocks = m.blocks_from_geometry(pairs.geometry)
    # self-pair blocks are symmetric in theory; remove rounding asymmetry
    d = pairs.diagonal
    off = 0.5 * (blocks[d, 0, 1] + blocks[d, 1, 0])
    blocks[d, 0, 1] = off
    blocks[d, 1, 0] = off
    out = np.empty((n, n, 2, 2))
    out[pairs.iu, pairs.ju] = blocks
    out[pairs.ju, pairs.iu] = blocks.transpose(0, 2, 1)
    return out.transpose(0, 2, 1, 3).reshape(2 * n, 2 * n)


def cov_matrix(locations, m, pairs=None):
    """Full 2n x 2n covariance of the observations, nugget on the diagonal."""
    if len(locations) < 1:
        raise ValueError("need at least one location")
    if pairs is None:
        pairs = location_pairs(locations)
    out = signal_matrix(locations, m, pairs)
    n = len(locations)
    out[np.arange(0, 2 * n, 2), np.arange(0, 2 * n, 2)] += m.nugget[0]
    out[np.arange(1, 2 * n, 2), np.arange(1, 2 * n, 2)] += m.nugget[1]
    if np.any(m.nugget == 0) and pairs.has_duplicates:
        warnings.warn("duplicate locations without a nugget: covariance matrix is singular",
                      RuntimeWarning, stacklevel=2)
    return out
