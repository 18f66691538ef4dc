"""Matérn kernel, its radial derivative functions and bivariate validity checks.

For an isotropic covariance C(h) = M(||h||) the Hessian in R^3 is

    K(h) = F(r) I + G(r) h h^T,   r = ||h||,

with F(r) = M'(r)/r and G(r) = F'(r)/r.  For the Matérn model both have
closed forms in K_{nu-1} and K_{nu-2}; nu > 1 keeps F finite at r = 0.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import gammaln

from ._bessel import kv_runs
from .exceptions import ParameterError

# Beyond this a*r the Bessel factor underflows; covariances are exactly 0.
UNDERFLOW_CUTOFF = 705.0
# Hessian switches to the r = 0 branch below this separation.
HESSIAN_ZERO_TOL = 1e-9


@dataclass(frozen=True)
class MaternParams:
    nu: float
    a: float

    def __post_init__(self):
        if not (self.nu > 0 and np.isfinite(self.nu)):
            raise ParameterError(f"smoothness nu must be positive, got {self.nu}")
        if not (self.a > 0 and np.isfinite(self.a)):
            raise ParameterError(f"scale a must be positive, got {self.a}")

    def require_differentiable(self):
        if not self.nu > 1:
            raise ParameterError(
                f"nu = {self.nu}: the potential must have nu > 1 to be differentiated")


@dataclass(frozen=True)
class ParsBivariateMaternParams:
    """Parsimonious bivariate Matérn: shared scale ``a``, cross smoothness
    (nu1 + nu2)/2."""

    sigma1: float
    sigma2: float
    rho12: float
    nu1: float
    nu2: float
    a: float

    def __post_init__(self):
        for name in ("sigma1", "sigma2"):
            v = getattr(self, name)
            if not (v >= 0 and np.isfinite(v)):
                raise ParameterError(f"{name} must be a finite non-negative number, got {v}")
        MaternParams(self.nu1, self.a)
        MaternParams(self.nu2, self.a)
        bound = rho_bound(self.nu1, self.nu2)
        if not abs(self.rho12) <= bound * (1 + 1e-12):
            raise ParameterError(
                f"|rho12| = {abs(self.rho12):.6g} exceeds the validity bound "
                f"{bound:.6g} for nu1 = {self.nu1}, nu2 = {self.nu2}")

    @property
    def nu12(self):
        return 0.5 * (self.nu1 + self.nu2)


@dataclass(frozen=True)
class FullBivariateMaternParams:
    sigma1: float
    sigma2: float
    rho12: float
    nu1: float
    nu2: float
    nu12: float
    a1: float
    a2: float
    a12: float


def _norm_const(nu):
    return math.exp((1.0 - nu) * math.log(2.0) - math.lgamma(nu))


def matern_values(r, nu, a):
    """Vectorised Matérn correlation 2^{1-nu}/Gamma(nu) (ar)^nu K_nu(ar)."""
    return matern_values_many(r, [nu], a)[0]


def matern_values_many(r, nus, a):
    """:func:`matern_values` for several smoothness values sharing one scale."""
    r = np.asarray(r, dtype=float)
    x = a * r
    outs = [np.zeros_like(x) for _ in nus]
    mid = (x > 0) & (x <= UNDERFLOW_CUTOFF)
    if np.any(mid):
        xm = x[mid]
        ks = kv_runs(nus, xm, 1)
        for out, nu, k in zip(outs, nus, ks):
            out[mid] = _norm_const(nu) * xm ** nu * k[0]
    for out in outs:
        out[x == 0] = 1.0
    return outs


def matern(r, p):
    """Matérn correlation M(r; nu, a) for ``p = MaternParams(nu, a)``."""
    if np.any(np.asarray(r) < 0):
        raise ValueError("distance must be non-negative")
    out = matern_values(r, p.nu, p.a)
    return float(out) if out.ndim == 0 else out


def f_at_zero(nu, a):
    return -a * a / (2.0 * (nu - 1.0))


def radial_fg(r, nu, a):
    """F(r) and G(r) arrays; G is set to 0 where r == 0 (it only ever
    multiplies h h^T there)."""
    return radial_fg_many(r, [nu], a)[0]


def radial_fg_many(r, nus, a):
    """:func:`radial_fg` for several smoothness values sharing one scale."""
    r = np.asarray(r, dtype=float)
    x = a * r
    out = []
    mid = (x > 0) & (x <= UNDERFLOW_CUTOFF)
    ks = kv_runs([nu - 2.0 for nu in nus], x[mid], 2) if np.any(mid) else None
    for j, nu in enumerate(nus):
        f = np.zeros_like(x)
        g = np.zeros_like(x)
        f[x == 0] = f_at_zero(nu, a)
        if ks is not None:
            xm = x[mid]
            k2, k1 = ks[j]
            c = _norm_const(nu)
            xp = xm ** (nu - 2.0)
            f[mid] = -c * a * a * xp * xm * k1
            g[mid] = c * a ** 4 * xp * k2
        out.append((f, g))
    return out


def f_radial(r, p):
    """F_Mat(r; nu, a) = M'(r)/r, with value -a^2/(2(nu-1)) at r = 0."""
    p.require_differentiable()
    if np.any(np.asarray(r) < 0):
        raise ValueError("distance must be non-negative")
    f, _ = radial_fg(r, p.nu, p.a)
    return float(f) if f.ndim == 0 else f


def g_radial(r, p):
    """G_Mat(r; nu, a) = F'(r)/r, defined for r > 0 only."""
    p.require_differentiable()
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("g_radial is defined only for r > 0")
    _, g = radial_fg(r, p.nu, p.a)
    return float(g) if g.ndim == 0 else g


def hessian_k(h, p):
    """3x3 Hessian of M(||h||) at separation ``h``."""
    p.require_differentiable()
    h = np.asarray(h, dtype=float)
    r = float(np.linalg.norm(h))
    if r < HESSIAN_ZERO_TOL:
        return f_at_zero(p.nu, p.a) * np.eye(3)
    f, g = radial_fg(r, p.nu, p.a)
    return float(f) * np.eye(3) + float(g) * np.outer(h, h)


def rho_bound(nu1, nu2, d=3):
    """Largest admissible |rho12| for the parsimonious bivariate Matérn in R^d."""
    half = 0.5 * d
    nbar = 0.5 * (nu1 + nu2)
    log_b = (0.5 * (gammaln(nu1 + half) - gammaln(nu1))
             + 0.5 * (gammaln(nu2 + half) - gammaln(nu2))
             + gammaln(nbar) - gammaln(nbar + half))
    return float(min(np.exp(log_b), 1.0))


def _log_ratio(t, p, d):
    half = 0.5 * d
    t2 = t * t
    return ((2 * p.nu12 + d) * np.log(p.a12 ** 2 + t2)
            - (p.nu1 + half) * np.log(p.a1 ** 2 + t2)
            - (p.nu2 + half) * np.log(p.a2 ** 2 + t2))


def full_bm_bound(p, d=3, n_grid=512):
    """Upper bound on rho12^2 for the full bivariate Matérn model.

    The infimum over t >= 0 is located on ``n_grid`` log-spaced points in
    [1e-4, 1e4] (plus t = 0 and the t -> infinity limit), then refined by a
    golden-section search between the neighbours of the best grid point.
    """
    half = 0.5 * d
    growth = 4 * p.nu12 - 2 * p.nu1 - 2 * p.nu2
    if growth < -1e-12:
        return 0.0
    t = np.concatenate([[0.0], np.logspace(-4, 4, n_grid)])
    vals = _log_ratio(t, p, d)
    k = int(np.argmin(vals))
    best = vals[k]
    if 0 < k < t.size - 1:
        res = optimize.minimize_scalar(lambda s: _log_ratio(s, p, d),
                                       bracket=(t[k - 1], t[k], t[k + 1]),
                                       method="golden")
        best = min(best, float(res.fun))
    if abs(growth) <= 1e-12:
        # ratio tends to 1 as t -> infinity
        best = min(best, 0.0)
    log_b = (gammaln(p.nu1 + half) - gammaln(p.nu1)
             + gammaln(p.nu2 + half) - gammaln(p.nu2)
             + 2 * (gammaln(p.nu12) - gammaln(p.nu12 + half))
             + 2 * p.nu1 * np.log(p.a1) + 2 * p.nu2 * np.log(p.a2)
             - 4 * p.nu12 * np.log(p.a12) + best)
    return float(np.exp(log_b))


def full_bm_valid(p, d=3):
    """Whether a full bivariate Matérn parameter set is a valid covariance."""
    if p.rho12 == 0:
        return True
    return bool(p.rho12 ** 2 <= full_bm_bound(p, d))
