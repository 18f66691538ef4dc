import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from conftest import TRUTH, random_locations
from tangent_matern import ObservationSet, build_model, fibonacci_grid, simulate_values
from tangent_matern.covariance import cov_matrix, cross_matrix, signal_matrix
from tangent_matern.exceptions import NotPositiveDefiniteError
from tangent_matern.predict import (Prediction, band_holdout, cokrige, crps_gaussian,
                                    log_score_gaussian, scores, standardized_errors)

NO_NUGGET = TRUTH[:6] + (0.0, 0.0)


def crps_quadrature(y, mu, sigma):
    f = lambda x: (norm.cdf(x, mu, sigma) - (x >= y)) ** 2  # noqa: E731
    lo, hi = min(y, mu) - 12 * sigma, max(y, mu) + 12 * sigma
    a = integrate.quad(f, lo, y, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    b = integrate.quad(f, y, hi, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    return a + b


def test_crps_reference_values():
    ref = 2 / math.sqrt(2 * math.pi) - 1 / math.sqrt(math.pi)
    assert crps_gaussian(0.0, 0.0, 1.0) == pytest.approx(ref, abs=1e-15)
    assert crps_gaussian(0.0, 0.0, 1.0) == pytest.approx(0.23370, abs=1e-5)
    assert crps_quadrature(0.0, 0.0, 1.0) == pytest.approx(ref, abs=1e-9)


def test_crps_against_quadrature():
    rng = np.random.default_rng(0)
    for _ in range(100):
        y, mu = rng.normal(0, 3, 2)
        sigma = rng.uniform(0.05, 4)
        assert crps_gaussian(y, mu, sigma) == pytest.approx(crps_quadrature(y, mu, sigma),
                                                            abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(y=st.floats(-50, 50), mu=st.floats(-50, 50), sigma=st.floats(0.01, 20),
       c=st.floats(0.1, 10))
def test_crps_properties(y, mu, sigma, c):
    v = crps_gaussian(y, mu, sigma)
    assert v >= 0
    assert crps_gaussian(c * y, c * mu, c * sigma) == pytest.approx(c * v, rel=1e-9, abs=1e-12)


def test_crps_asymptote_and_domain():
    assert crps_gaussian(1e4, 0.0, 1.0) == pytest.approx(1e4, rel=1e-3)
    with pytest.raises(ValueError):
        crps_gaussian(0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        crps_gaussian(0.0, 0.0, -1.0)


def test_log_score():
    assert log_score_gaussian(0.3, 0.3, 1.0) == pytest.approx(0.5 * math.log(2 * math.pi),
                                                              abs=1e-12)
    assert log_score_gaussian(1.0, 0.0, 0.0) == math.inf
    assert log_score_gaussian(0.0, 0.0, 0.0) == -math.inf


def test_perfect_prediction_scores():
    locs = fibonacci_grid(4)
    mean = np.random.default_rng(1).normal(size=(1, 4, 2))
    pred = Prediction(locs, mean, np.ones((4, 2)), np.zeros(2))
    sc = scores(pred, mean[0], observation_noise=False)
    for label in ("u", "v", "pooled"):
        assert sc[label]["MSPE"] == 0 and sc[label]["MAE"] == 0
        assert sc[label]["LogS"] == pytest.approx(0.9189385332, abs=1e-9)
        assert sc[label]["CRPS"] == pytest.approx(0.2336949772, abs=1e-9)


def test_prior_only_prediction():
    m = build_model("tmm", TRUTH)
    targets = fibonacci_grid(10)
    pred = cokrige(None, m, targets)
    np.testing.assert_array_equal(pred.mean, 0)
    np.testing.assert_allclose(pred.sd, math.sqrt(5 / 3), rtol=1e-14)
    truth = np.random.default_rng(2).normal(size=(10, 2))
    assert scores(pred, truth)["pooled"]["MSPE"] == pytest.approx(np.mean(truth ** 2))
    empty = ObservationSet([], np.zeros((2, 0, 2)))
    assert cokrige(empty, m, targets).mean.shape == (2, 10, 2)


def test_exact_interpolation_without_nugget():
    m = build_model("tmm", NO_NUGGET)
    locs = random_locations(np.random.default_rng(3), 25)
    obs = ObservationSet(locs, simulate_values(locs, m, 2, 4))
    pred = cokrige(obs, m, locs[:5])
    np.testing.assert_allclose(pred.mean, obs.values[:, :5], atol=1e-10)
    np.testing.assert_allclose(pred.sd, 0, atol=1e-6)
    assert np.all(pred.sd ** 2 < 1e-10)


def test_variance_contraction_and_full_cov():
    m = build_model("tmm", TRUTH)
    rng = np.random.default_rng(5)
    train, targets = random_locations(rng, 30), random_locations(rng, 12)
    obs = ObservationSet(train, simulate_values(train, m, 1, 0))
    pred = cokrige(obs, m, targets, full_cov=True)
    assert np.all(pred.sd ** 2 <= 5 / 3 + 1e-10)
    np.testing.assert_allclose(np.diag(pred.cov), pred.sd.reshape(-1) ** 2, atol=1e-12)
    np.testing.assert_allclose(pred.observation_sd() ** 2, pred.sd ** 2 + 0.01, rtol=1e-13)


def test_sequential_conditioning_matches_batch():
    m = build_model("tmm", TRUTH)
    rng = np.random.default_rng(6)
    train, targets = random_locations(rng, 24), random_locations(rng, 6)
    y = simulate_values(train, m, 1, 1)
    batch = cokrige(ObservationSet(train, y), m, targets, full_cov=True)
    # condition on the first half, then update with the second half
    a, b = train[:12], train[12:]
    ya, yb = y[0, :12].reshape(-1), y[0, 12:].reshape(-1)
    saa = cov_matrix(a, m)
    rest = b + targets
    s_rest = signal_matrix(rest, m)
    nb = 2 * len(b)
    s_rest[:nb, :nb] = cov_matrix(b, m)
    k = cross_matrix(rest, a, m)
    mean1 = k @ np.linalg.solve(saa, ya)
    cov1 = s_rest - k @ np.linalg.solve(saa, k.T)
    gain = cov1[nb:, :nb] @ np.linalg.inv(cov1[:nb, :nb])
    mean2 = mean1[nb:] + gain @ (yb - mean1[:nb])
    cov2 = cov1[nb:, nb:] - gain @ cov1[:nb, nb:]
    np.testing.assert_allclose(batch.mean[0].reshape(-1), mean2, atol=1e-8)
    np.testing.assert_allclose(batch.cov, cov2, atol=1e-8)


def test_calibration():
    m = build_model("tmm", TRUTH)
    locs = fibonacci_grid(400)
    vals = simulate_values(locs, m, 5, 12)
    tr, te = band_holdout(locs, seed=0)
    obs = ObservationSet(locs, vals)
    pred = cokrige(obs.subset(tr), m, [locs[i] for i in te])
    z = standardized_errors(pred, vals[:, te])
    assert z.size == 2000
    assert 0.9 <= z.var() <= 1.1


def test_singular_training_raises():
    m = build_model("tmm", NO_NUGGET)
    s = fibonacci_grid(3)[1]
    obs = ObservationSet([s, s], np.ones((1, 2, 2)))
    with pytest.warns(RuntimeWarning):
        with pytest.raises(NotPositiveDefiniteError):
            cokrige(obs, m, fibonacci_grid(2))


def test_band_holdout():
    locs = fibonacci_grid(768)
    tr, te = band_holdout(locs, seed=4)
    assert tr.size == 384 and te.size == 384
    assert np.intersect1d(tr, te).size == 0
    np.testing.assert_array_equal(np.sort(np.r_[tr, te]), np.arange(768))
    tr2, _ = band_holdout(locs, seed=4)
    np.testing.assert_array_equal(tr, tr2)
    lon = np.array([p.lon_deg for p in locs])
    # some 30-degree window contains no training site
    centres = np.arange(0, 360, 0.5)
    gaps = [np.all(np.abs((lon[tr] - c + 180) % 360 - 180) > 15) for c in centres]
    assert any(gaps)
    assert not np.array_equal(band_holdout(locs, seed=5)[0], tr)


def test_scores_shape_check():
    locs = fibonacci_grid(3)
    pred = Prediction(locs, np.zeros((1, 3, 2)), np.ones((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        scores(pred, np.zeros((4, 2)))
