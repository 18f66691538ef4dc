import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tangent_matern import sphere
from tangent_matern.exceptions import GridError, PoleError

lat_st = st.floats(-89.0, 89.0)
lon_st = st.floats(0.0, 359.999)


def test_equator_prime_meridian():
    s = sphere.from_latlon(0, 0)
    np.testing.assert_allclose(s.xyz, [1, 0, 0], atol=1e-15)
    assert s.theta == pytest.approx(np.pi / 2)
    assert s.phi == 0.0


def test_southern_point_unit_vector():
    s = sphere.from_latlon(-45, 90)
    np.testing.assert_allclose(s.xyz, [0, np.sqrt(2) / 2, -np.sqrt(2) / 2], atol=1e-15)


def test_near_pole_accepted_but_pole_rejected_for_frames():
    s = sphere.from_latlon(89.9999999, 10.0)
    sphere.canonical_transform(s)
    with pytest.raises(PoleError, match="canonical frame undefined at poles"):
        sphere.canonical_transform(sphere.from_latlon(90.0, 0.0))
    with pytest.raises(PoleError):
        sphere.canonical_transform(sphere.from_latlon(-90.0, 123.0))
    with pytest.raises(GridError):
        sphere.regular_grid(3, 4, -90.0, 10.0)


def test_latitude_out_of_range():
    with pytest.raises(ValueError):
        sphere.from_latlon(91.0, 0.0)


def test_projector_examples():
    north = sphere.Location.from_xyz(0, 0, 1)
    np.testing.assert_allclose(sphere.projector_tangent(north), np.diag([1.0, 1.0, 0.0]))
    east = sphere.Location.from_xyz(1, 0, 0)
    np.testing.assert_allclose(sphere.projector_tangent(east), np.diag([0.0, 1.0, 1.0]))
    np.testing.assert_array_equal(sphere.projector_curl(north),
                                  [[0, -1, 0], [1, 0, 0], [0, 0, 0]])


def test_canonical_transform_examples():
    t = sphere.canonical_transform(sphere.Location.from_colatlon(np.pi / 2, 0.0))
    np.testing.assert_allclose(t, [[0, 1, 0], [0, 0, 1]], atol=1e-15)
    t = sphere.canonical_transform(sphere.Location.from_colatlon(np.pi / 4, np.pi / 2))
    r = np.sqrt(2) / 2
    np.testing.assert_allclose(t, [[-1, 0, 0], [0, -r, r]], atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(lat=lat_st, lon=lon_st)
def test_projector_identities(lat, lon):
    s = sphere.from_latlon(lat, lon)
    assert np.linalg.norm(s.xyz) == pytest.approx(1.0, abs=1e-12)
    p = sphere.projector_tangent(s)
    q = sphere.projector_curl(s)
    t = sphere.canonical_transform(s)
    np.testing.assert_allclose(p @ p, p, atol=1e-14)
    np.testing.assert_allclose(p @ s.xyz, 0, atol=1e-15)
    assert np.linalg.matrix_rank(p) == 2
    np.testing.assert_array_equal(q + q.T, 0)
    np.testing.assert_allclose(q @ p, q, atol=1e-13)
    np.testing.assert_allclose(p @ q, q, atol=1e-13)
    np.testing.assert_allclose(t @ t.T, np.eye(2), atol=1e-14)
    np.testing.assert_allclose(t @ s.xyz, 0, atol=1e-15)
    np.testing.assert_allclose(t.T @ t, p, atol=1e-13)
    v = p @ np.array([0.3, -1.2, 0.7])
    w = q @ v
    np.testing.assert_allclose(w, np.cross(s.xyz, v), atol=1e-14)
    assert abs(w @ v) < 1e-13 and abs(w @ s.xyz) < 1e-13


@settings(max_examples=200, deadline=None)
@given(a=lat_st, b=lon_st, c=lat_st, d=lon_st)
def test_chordal_and_great_circle(a, b, c, d):
    s, t = sphere.from_latlon(a, b), sphere.from_latlon(c, d)
    gamma = sphere.great_circle_distance(s, t)
    assert sphere.chordal_distance(s, t) == pytest.approx(2 * np.sin(gamma / 2), abs=1e-13)
    assert sphere.chordal_distance(s, t) == sphere.chordal_distance(t, s)


def test_distance_examples():
    a = sphere.from_latlon(0, 0)
    assert sphere.chordal_distance(a, a) == 0
    assert sphere.chordal_distance(a, sphere.from_latlon(0, 180)) == pytest.approx(2.0)
    assert sphere.chordal_distance(a, sphere.from_latlon(0, 90)) == pytest.approx(np.sqrt(2))


def test_regular_grid_examples():
    g = sphere.regular_grid(10, 20, -50, 50)
    assert g.n == 200 and len(g.locations()) == 200
    assert np.degrees(g.phi_values[1]) == pytest.approx(18.0)
    assert sphere.regular_grid(25, 50, -50, 50).n == 1250
    g = sphere.regular_grid(2, 2, -10, 10)
    locs = g.locations()
    assert sorted({round(p.lat_deg, 9) for p in locs}) == [-10.0, 10.0]
    assert sorted({round(p.lon_deg, 9) for p in locs}) == [0.0, 180.0]
    np.testing.assert_allclose(np.diff(g.phi_values), np.pi)


def test_regular_grid_invalid():
    with pytest.raises(GridError):
        sphere.regular_grid(1, 4, -10, 10)
    with pytest.raises(GridError):
        sphere.regular_grid(3, 4, 10, -10)
    with pytest.raises(GridError):
        sphere.regular_grid(3, 4, -30, 90)


def test_fibonacci_grid():
    assert len(sphere.fibonacci_grid(1)) == 1
    pts = sphere.fibonacci_grid(768)
    assert len(pts) == 768
    assert not any(p.is_pole for p in pts)
    xyz, _, _ = sphere.as_arrays(pts)
    d = np.linalg.norm(xyz[:, None] - xyz[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    nn = d.min(axis=1)
    assert nn.min() > 0
    assert nn.std() / nn.mean() < 0.25
    assert sphere.fibonacci_grid(768) == pts
