import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tangent_matern.exceptions import ParameterError
from tangent_matern.kernels import (FullBivariateMaternParams, MaternParams,
                                    ParsBivariateMaternParams, f_radial, full_bm_bound,
                                    full_bm_valid, g_radial, hessian_k, matern, rho_bound)

mpmath.mp.dps = 40


def mp_matern(r, nu, a):
    x = mpmath.mpf(a) * r
    if x == 0:
        return 1.0
    return float(2 ** (1 - mpmath.mpf(nu)) / mpmath.gamma(nu) * x ** nu * mpmath.besselk(nu, x))


def test_matern_examples():
    assert matern(0.0, MaternParams(2.3, 0.7)) == 1.0
    assert matern(1.0, MaternParams(1.5, 1.0)) == pytest.approx(2 * np.exp(-1), rel=1e-14)
    assert matern(0.5, MaternParams(3.0, 2.0)) == pytest.approx(mp_matern(0.5, 3, 2), rel=1e-10)


def test_matern_half_integer_forms():
    r = np.linspace(0, 8, 81)
    np.testing.assert_allclose(matern(r, MaternParams(1.5, 1.0)), (1 + r) * np.exp(-r),
                               rtol=1e-12)
    np.testing.assert_allclose(matern(r, MaternParams(2.5, 1.0)),
                               (1 + r + r * r / 3) * np.exp(-r), rtol=1e-12)
    np.testing.assert_allclose(matern(r, MaternParams(3.5, 1.0)),
                               (1 + r + 2 * r * r / 5 + r ** 3 / 15) * np.exp(-r), rtol=1e-12)


def test_matern_monotone_positive_and_underflow():
    r = np.linspace(0, 300, 3001)
    m = matern(r, MaternParams(2.0, 1.0))
    assert np.all(np.diff(m) <= 0)
    assert np.all(m[:700] > 0)
    assert matern(800.0, MaternParams(2.0, 1.0)) == 0.0


def test_f_radial_at_zero():
    assert f_radial(0.0, MaternParams(3.0, 2.0)) == -1.0
    assert f_radial(0.0, MaternParams(4.0, 2.0)) == pytest.approx(-2 / 3, abs=1e-16)
    p = MaternParams(3.0, 1.0)
    assert abs(f_radial(1e-4, p) - f_radial(0.0, p)) < 1e-6


def test_g_radial_domain():
    with pytest.raises(ValueError):
        g_radial(0.0, MaternParams(3.0, 1.0))


def test_g_is_derivative_of_f_over_r():
    p = MaternParams(2.6, 1.3)
    h = 1e-5
    for r in np.linspace(0.1, 1.0, 10):
        fd = (f_radial(r + h, p) - f_radial(r - h, p)) / (2 * h)
        assert g_radial(r, p) == pytest.approx(fd / r, abs=1e-5)


def fd_hessian(h, p, step=1e-4):
    def m(v):
        return matern(float(np.linalg.norm(v)), p)

    out = np.empty((3, 3))
    e = np.eye(3) * step
    for i in range(3):
        for j in range(3):
            out[i, j] = (m(h + e[i] + e[j]) - m(h + e[i] - e[j])
                         - m(h - e[i] + e[j]) + m(h - e[i] - e[j])) / (4 * step * step)
    return out


def test_hessian_examples():
    np.testing.assert_array_equal(hessian_k(np.zeros(3), MaternParams(3.0, 2.0)), -np.eye(3))
    h = np.array([0.3, 0.0, 0.0])
    p = MaternParams(2.0, 1.0)
    np.testing.assert_allclose(hessian_k(h, p), fd_hessian(h, p), atol=1e-5)
    h = np.array([0.2, -0.4, 0.1])
    p = MaternParams(3.4, 1.7)
    r = np.linalg.norm(h)
    expect = f_radial(r, p) * np.eye(3) + g_radial(r, p) * np.outer(h, h)
    np.testing.assert_allclose(hessian_k(h, p), expect, rtol=1e-15)


def test_hessian_continuity_at_zero():
    p = MaternParams(3.0, 1.0)
    h0 = hessian_k(np.zeros(3), p)
    assert np.all(np.linalg.eigvalsh(h0) < 0)
    np.testing.assert_allclose(hessian_k(np.array([1e-7, 0, 0]), p), h0, atol=1e-6)
    np.testing.assert_array_equal(hessian_k(np.array([1e-10, 0, 0]), p), h0)


@settings(max_examples=60, deadline=None)
@given(nu=st.floats(1.05, 5.0), a=st.floats(0.2, 5.0), x=st.floats(-1, 1), y=st.floats(-1, 1),
       z=st.floats(-1, 1))
def test_hessian_is_symmetric_and_matches_fd(nu, a, x, y, z):
    h = np.array([x, y, z])
    if np.linalg.norm(h) < 0.05:
        h = h + 0.1
    p = MaternParams(nu, a)
    k = hessian_k(h, p)
    np.testing.assert_array_equal(k, k.T)
    # the FD step stays clear of the r = 0 kink for nu close to 1
    np.testing.assert_allclose(k, fd_hessian(h, p), atol=2e-5 * max(1, a * a))


def test_rho_bound_examples():
    assert rho_bound(2.5, 2.5) == 1.0
    assert rho_bound(3, 4) == pytest.approx(0.98634, abs=5e-5)
    assert rho_bound(1.3, 4.2) == rho_bound(4.2, 1.3)
    assert 0 < rho_bound(1.01, 5.0) < 1


def test_rho_bound_oracle():
    for nu1, nu2 in [(3, 4), (1.5, 2.5), (1.1, 4.9)]:
        nb = (nu1 + nu2) / 2
        g = mpmath.gamma
        ref = mpmath.sqrt(g(nu1 + 1.5) * g(nu2 + 1.5) / (g(nu1) * g(nu2))) * g(nb) / g(nb + 1.5)
        assert rho_bound(nu1, nu2) == pytest.approx(float(ref), rel=1e-12)


def test_pars_params_validation():
    with pytest.raises(ParameterError, match="validity bound"):
        ParsBivariateMaternParams(1, 1, 0.99, 3, 4, 2)
    with pytest.raises(ParameterError):
        MaternParams(0.0, 1.0)
    with pytest.raises(ParameterError):
        MaternParams(1.5, -1.0)


def test_full_bm_validity():
    assert full_bm_valid(FullBivariateMaternParams(1, 1, 0.0, 2, 3, 1.0, 1, 2, 3))
    assert not full_bm_valid(FullBivariateMaternParams(1, 1, 0.1, 2, 3, 2.4, 1, 1, 1))
    for nu1, nu2, a in [(3, 4, 2.0), (1.5, 2.5, 0.7), (2.2, 4.8, 3.0)]:
        p = FullBivariateMaternParams(1, 1, 0.5, nu1, nu2, (nu1 + nu2) / 2, a, a, a)
        assert np.sqrt(full_bm_bound(p)) == pytest.approx(rho_bound(nu1, nu2), abs=1e-6)
