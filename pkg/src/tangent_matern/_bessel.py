"""Modified Bessel function of the second kind, K_nu(x), for real order.

Small arguments (x < 0.25) use Temme's series, 0.25 <= x <= 12 a trapezoid rule
on the integral representation, and larger arguments Steed's continued
fraction (CF2).  Each produces K_mu and K_{mu+1} for a reduced
order |mu| <= 1/2, and the requested orders are reached by the (stable)
forward recurrence ``K_{m+1} = K_{m-1} + (2m/x) K_m``.

The routines are compiled with numba and operate elementwise on float64
arrays.
"""

import math

import numba
import numpy as np

# Taylor coefficients of 1/Gamma(1+z) about z = 0.
_RGAMMA_COEF = np.array([
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
    -2.2987456844353702066e-19,
])

_EPS = 1.0e-16
_MAXIT = 10000
_XMIN = 0.25
_XQUAD = 12.0
_QUAD_H = 0.2
_QUAD_N = 64


@numba.njit(cache=True, nogil=True)
def _temme_gammas(mu):
    """Return (gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu)) for |mu| <= 1/2."""
    c = _RGAMMA_COEF
    gam1 = 0.0
    gam2 = 0.0
    m2 = mu * mu
    p = 1.0
    for k in range(0, c.shape[0] - 1, 2):
        gam2 += c[k] * p
        gam1 -= c[k + 1] * p
        p *= m2
    gampl = gam2 - mu * gam1
    gammi = gam2 + mu * gam1
    return gam1, gam2, gampl, gammi


@numba.njit(cache=True, nogil=True)
def _temme_pair(mu, x):
    """Temme's series; accurate for x < 2."""
    x2 = 0.5 * x
    pimu = math.pi * mu
    fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
    d = -math.log(x2)
    e = mu * d
    fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
    gam1, gam2, gampl, gammi = _temme_gammas(mu)
    ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
    total = ff
    e = math.exp(e)
    p = 0.5 * e / gampl
    q = 0.5 / (e * gammi)
    c = 1.0
    d = x2 * x2
    total1 = p
    for i in range(1, _MAXIT):
        fi = float(i)
        ff = (fi * ff + p + q) / (fi * fi - mu * mu)
        c *= d / fi
        p /= fi - mu
        q /= fi + mu
        delta = c * ff
        total += delta
        total1 += c * (p - fi * ff)
        if abs(delta) < abs(total) * _EPS:
            break
    return total, total1 * 2.0 / x


@numba.njit(cache=True, nogil=True)
def _steed_pair(mu, x):
    """Steed's continued fraction CF2; converges quickly for large x."""
    b = 2.0 * (1.0 + x)
    d = 1.0 / b
    h = d
    delh = d
    q1 = 0.0
    q2 = 1.0
    a1 = 0.25 - mu * mu
    q = a1
    c = a1
    a = -a1
    s = 1.0 + q * delh
    for i in range(2, _MAXIT):
        a -= 2.0 * (i - 1)
        c = -a * c / i
        qnew = (q1 - b * q2) / a
        q1 = q2
        q2 = qnew
        q += c * qnew
        b += 2.0
        d = 1.0 / (b + a * d)
        delh = (b * d - 1.0) * delh
        h += delh
        dels = q * delh
        s += dels
        if abs(dels / s) < _EPS:
            break
    h = a1 * h
    kmu = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) / s
    return kmu, kmu * (mu + x + 0.5 - h) / x


@numba.njit(cache=True, nogil=True)
def _quad_tables(mu):
    """cosh(t_k), cosh(mu t_k), cosh((mu + 1) t_k) on the quadrature nodes."""
    tab = np.empty((3, _QUAD_N))
    for k in range(_QUAD_N):
        t = k * _QUAD_H
        tab[0, k] = math.cosh(t)
        tab[1, k] = math.cosh(mu * t)
        tab[2, k] = math.cosh((mu + 1.0) * t)
    return tab


@numba.njit(cache=True, nogil=True)
def _quad_pair(x, tab, ebuf, filled):
    """Trapezoid rule for K_v(x) = int_0^inf exp(-x cosh t) cosh(v t) dt.

    The integrand is analytic and decays double exponentially, so a fixed
    step of 0.2 is exact to rounding for 0.25 <= x <= 12.  The node values
    exp(-x cosh t_k) do not depend on the order; ``ebuf[:filled]`` holds
    those already computed for this x and is extended on demand.
    """
    if filled == 0:
        ebuf[0] = math.exp(-x)
        filled = 1
    e = ebuf[0]
    s0 = 0.5 * e
    s1 = 0.5 * e
    for k in range(1, _QUAD_N):
        if k >= filled:
            ebuf[k] = math.exp(-x * tab[0, k])
            filled = k + 1
        e = ebuf[k]
        s0 += e * tab[1, k]
        t1 = e * tab[2, k]
        s1 += t1
        if t1 < 1e-18 * s1:
            break
    return _QUAD_H * s0, _QUAD_H * s1, filled


@numba.njit(cache=True, nogil=True)
def _k_pair(mu, x, tab, ebuf, filled):
    """K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2 and x > 0; ``tab`` comes
    from ``_quad_tables(mu)``, ``ebuf``/``filled`` as in ``_quad_pair``."""
    if x < _XMIN:
        k0, k1 = _temme_pair(mu, x)
        return k0, k1, filled
    if x <= _XQUAD:
        return _quad_pair(x, tab, ebuf, filled)
    k0, k1 = _steed_pair(mu, x)
    return k0, k1, filled


@numba.njit(cache=True, nogil=True)
def _reduce(o):
    """Split order o >= 0 into (mu, steps) with |mu| <= 1/2, o = mu + steps."""
    base = math.floor(o + 0.5)
    return o - base, int(base)


@numba.njit(cache=True, nogil=True)
def _up(k0, k1, mu, steps, x):
    m = mu
    for _ in range(steps):
        k0, k1 = k1, k0 + 2.0 * (m + 1.0) / x * k1
        m += 1.0
    return k0, k1


@numba.njit(cache=True, nogil=True)
def _kv_array(orders, x, count):
    n_orders = orders.shape[0]
    n = x.shape[0]
    out = np.empty((n_orders, count, n))
    # orders below zero are reflected and computed one by one: backward
    # recurrence through zero cancels badly at small x.  Slot n_neg[j]
    # holds the reduced order that starts the forward run.
    n_neg = np.zeros(n_orders, dtype=np.int64)
    mus = np.zeros((n_orders, count + 1))
    steps = np.zeros((n_orders, count + 1), dtype=np.int64)
    tabs = np.empty((n_orders, count + 1, 3, _QUAD_N))
    for j in range(n_orders):
        order = orders[j]
        while n_neg[j] < count and order + n_neg[j] < 0.0:
            n_neg[j] += 1
        for q in range(n_neg[j]):
            mus[j, q], steps[j, q] = _reduce(-(order + q))
        if n_neg[j] < count:
            mus[j, n_neg[j]], steps[j, n_neg[j]] = _reduce(order + n_neg[j])
        for q in range(n_neg[j] + 1):
            tabs[j, q] = _quad_tables(mus[j, q])
    ebuf = np.empty(_QUAD_N)
    for i in range(n):
        xi = x[i]
        if xi > 705.0:
            out[:, :, i] = 0.0
            continue
        filled = 0
        for j in range(n_orders):
            nn = n_neg[j]
            for q in range(nn):
                k0, k1, filled = _k_pair(mus[j, q], xi, tabs[j, q], ebuf, filled)
                k0, k1 = _up(k0, k1, mus[j, q], steps[j, q], xi)
                out[j, q, i] = k0
            if nn == count:
                continue
            mu = mus[j, nn]
            k0, k1, filled = _k_pair(mu, xi, tabs[j, nn], ebuf, filled)
            k0, k1 = _up(k0, k1, mu, steps[j, nn], xi)
            out[j, nn, i] = k0
            if count > nn + 1:
                out[j, nn + 1, i] = k1
            m = mu + steps[j, nn] + 1.0
            for k in range(nn + 2, count):
                out[j, k, i] = out[j, k - 2, i] + 2.0 * m / xi * out[j, k - 1, i]
                m += 1.0
    return out


def kv_runs(orders, x, count=1):
    """:func:`kv_run` for several lowest orders at once, sharing the
    quadrature nodes; returns shape ``(len(orders), count) + x.shape``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("K_nu(x) requires x > 0")
    flat = np.ascontiguousarray(x.ravel())
    orders = np.array(orders, dtype=float).reshape(-1)
    out = _kv_array(orders, flat, int(count))
    return out.reshape((orders.size, count) + x.shape)


def kv_run(order, x, count=1):
    """K_{order+k}(x) for k = 0, ..., count-1.

    Parameters
    ----------
    order : float
        Lowest requested order; any real value.
    x : array_like
        Strictly positive arguments.  Values above 705 return 0.
    count : int
        Number of consecutive integer-spaced orders.

    Returns
    -------
    ndarray of shape ``(count,) + x.shape``.
    """
    return kv_runs([order], x, count)[0]


def kv(order, x):
    """K_order(x) elementwise; the reflection K_{-v} = K_v holds."""
    return kv_run(order, x, 1)[0]
