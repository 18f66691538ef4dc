"""Geometry on the unit sphere.

Angles are radians internally; co-latitude ``theta`` runs from 0 (north
pole) to pi and longitude ``phi`` lives in [0, 2*pi).  Degrees appear only
in :func:`from_latlon` and the ``*_deg`` helpers used for I/O.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import GridError, PoleError

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Location:
    """A point on the unit sphere, stored both as a unit vector and as
    (co-latitude, longitude)."""

    x: float
    y: float
    z: float
    theta: float
    phi: float

    @classmethod
    def from_colatlon(cls, theta, phi):
        theta = float(theta)
        phi = float(phi) % _TWO_PI
        if not 0.0 <= theta <= np.pi:
            raise ValueError(f"co-latitude {theta} outside [0, pi]")
        st = np.sin(theta)
        return cls(st * np.cos(phi), st * np.sin(phi), np.cos(theta), theta, phi)

    @classmethod
    def from_xyz(cls, x, y, z):
        v = np.array([x, y, z], dtype=float)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("zero vector is not a point on the sphere")
        v /= norm
        theta = float(np.arccos(np.clip(v[2], -1.0, 1.0)))
        phi = float(np.arctan2(v[1], v[0]) % _TWO_PI)
        return cls(float(v[0]), float(v[1]), float(v[2]), theta, phi)

    @property
    def xyz(self):
        return np.array([self.x, self.y, self.z])

    @property
    def lat_deg(self):
        return 90.0 - np.degrees(self.theta)

    @property
    def lon_deg(self):
        return np.degrees(self.phi)

    @property
    def is_pole(self):
        return self.theta == 0.0 or self.theta == np.pi or np.hypot(self.x, self.y) < 1e-15


def from_latlon(lat_deg, lon_deg):
    """Location from latitude/longitude in degrees.

    Poles are accepted here; they are rejected later by anything that needs
    the canonical east/north frame.
    """
    if not -90.0 <= lat_deg <= 90.0:
        raise ValueError(f"latitude {lat_deg} outside [-90, 90]")
    return Location.from_colatlon(np.pi / 2 - np.radians(lat_deg), np.radians(lon_deg))


def projector_tangent(s):
    """P_s = I - s s^T, the orthogonal projector onto the tangent plane at s."""
    v = s.xyz
    return np.eye(3) - np.outer(v, v)


def projector_curl(s):
    """Q_s, the matrix of v -> s x v (rotation by 90 degrees in the tangent plane)."""
    x, y, z = s.x, s.y, s.z
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def canonical_transform(s):
    """T_s, the 2x3 matrix whose rows are the local east and north unit vectors."""
    if s.is_pole:
        raise PoleError("canonical frame undefined at poles")
    return _canonical_rows(np.array(s.theta), np.array(s.phi))


def _canonical_rows(theta, phi):
    """Vectorised T_s; output shape ``theta.shape + (2, 3)``."""
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    zero = np.zeros_like(st)
    east = np.stack([-sp, cp, zero], axis=-1)
    north = np.stack([-ct * cp, -ct * sp, st], axis=-1)
    return np.stack([east, north], axis=-2)


def chordal_distance(s, t):
    return float(np.linalg.norm(s.xyz - t.xyz))


def great_circle_distance(s, t):
    """Central angle between s and t in radians (atan2 form, stable at 0 and pi)."""
    a, b = s.xyz, t.xyz
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b)))


def as_arrays(locations):
    """Unpack a sequence of Locations into (xyz, theta, phi) arrays."""
    xyz = np.array([[p.x, p.y, p.z] for p in locations], dtype=float).reshape(-1, 3)
    theta = np.array([p.theta for p in locations], dtype=float)
    phi = np.array([p.phi for p in locations], dtype=float)
    return xyz, theta, phi


def check_no_poles(locations):
    for i, p in enumerate(locations):
        if p.is_pole:
            raise PoleError(f"location {i} is a pole; canonical frame undefined at poles")


def pairwise_great_circle(xyz_a, xyz_b=None):
    """Matrix of central angles between two point sets given as unit vectors."""
    if xyz_b is None:
        xyz_b = xyz_a
    dot = np.clip(xyz_a @ xyz_b.T, -1.0, 1.0)
    cross = np.linalg.norm(np.cross(xyz_a[:, None, :], xyz_b[None, :, :]), axis=-1)
    return np.arctan2(cross, dot)


def great_circle_distance_xyz(xyz_a, xyz_b):
    """Elementwise central angles between matching rows of two (..., 3) arrays."""
    dot = np.sum(xyz_a * xyz_b, axis=-1)
    cross = np.linalg.norm(np.cross(xyz_a, xyz_b), axis=-1)
    return np.arctan2(cross, dot)


@dataclass(frozen=True)
class RegularGrid:
    """Latitude/longitude grid whose longitudes span the whole circle.

    ``theta_values`` are ascending co-latitudes (so latitudes run north to
    south); ``phi_values[j] = 2*pi*j/n_lon``.  Locations are ordered
    latitude-major: index ``i * n_lon + j``.
    """

    theta_values: tuple
    n_lon: int

    def __post_init__(self):
        th = np.asarray(self.theta_values, dtype=float)
        if th.ndim != 1 or th.size < 1:
            raise GridError("grid needs at least one latitude")
        if np.any(th <= 0) or np.any(th >= np.pi):
            raise GridError("grid latitudes must exclude the poles")
        if np.any(np.diff(th) <= 0):
            raise GridError("co-latitudes must be strictly ascending")
        if self.n_lon < 1:
            raise GridError("n_lon must be positive")

    @property
    def n_lat(self):
        return len(self.theta_values)

    @property
    def n(self):
        return self.n_lat * self.n_lon

    @property
    def phi_values(self):
        return _TWO_PI * np.arange(self.n_lon) / self.n_lon

    @property
    def lat_deg(self):
        return 90.0 - np.degrees(np.asarray(self.theta_values))

    def locations(self):
        th = np.asarray(self.theta_values)
        return [Location.from_colatlon(t, p) for t in th for p in self.phi_values]

    def lat_index(self, lat_deg, tol=1e-6):
        hits = np.flatnonzero(np.abs(self.lat_deg - lat_deg) < tol)
        if hits.size == 0:
            raise GridError(f"latitude {lat_deg} is not a grid latitude")
        return int(hits[0])


def regular_grid(n_lat, n_lon, lat_min_deg, lat_max_deg):
    """Equally spaced latitudes (both ends included) times a full circle of
    ``n_lon`` longitudes starting at 0."""
    if n_lat < 2 or n_lon < 2:
        raise GridError("regular_grid needs n_lat >= 2 and n_lon >= 2")
    if not -90.0 < lat_min_deg < lat_max_deg < 90.0:
        raise GridError("latitude bounds must satisfy -90 < lat_min < lat_max < 90")
    lats = np.linspace(lat_max_deg, lat_min_deg, n_lat)
    theta = np.pi / 2 - np.radians(lats)
    return RegularGrid(tuple(float(t) for t in theta), int(n_lon))


def fibonacci_grid(n):
    """Deterministic Fibonacci lattice of ``n`` nearly equal-area points.

    Point k sits at z = 1 - (2k+1)/n, so the exact poles are never hit.
    """
    if n < 1:
        raise ValueError("n must be positive")
    k = np.arange(n)
    z = 1.0 - (2.0 * k + 1.0) / n
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    phi = (_TWO_PI * k / golden) % _TWO_PI
    theta = np.arccos(z)
    return [Location.from_colatlon(t, p) for t, p in zip(theta, phi)]
