"""Containers for replicated (u, v) observations."""

from dataclasses import dataclass, field

import numpy as np

from . import sphere
from .exceptions import GridError


@dataclass
class ObservationSet:
    """(u, v) values at fixed locations over independent replicates.

    ``values`` has shape ``(n_reps, n, 2)``; a 2-D ``(n, 2)`` array is read
    as a single replicate.
    """

    locations: list
    values: np.ndarray
    times: list = field(default=None)

    def __post_init__(self):
        self.locations = list(self.locations)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 2:
            vals = vals[None]
        if vals.ndim != 3 or vals.shape[1:] != (len(self.locations), 2):
            raise ValueError(f"values must have shape (n_reps, {len(self.locations)}, 2), "
                             f"got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("observation values must be finite")
        sphere.check_no_poles(self.locations)
        self.values = vals
        if self.times is None:
            self.times = list(range(vals.shape[0]))

    @property
    def n(self):
        return len(self.locations)

    @property
    def n_reps(self):
        return self.values.shape[0]

    def flat(self):
        """Replicates as rows of length 2n, interleaved (u, v)."""
        return self.values.reshape(self.n_reps, -1)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return ObservationSet([self.locations[i] for i in idx], self.values[:, idx], self.times)

    def replicate(self, r):
        return ObservationSet(self.locations, self.values[r:r + 1], [self.times[r]])


@dataclass
class GridObservations:
    """Observations on every node of a :class:`~tangent_matern.sphere.RegularGrid`.

    ``values`` has shape ``(n_reps, n_lat, n_lon, 2)``.
    """

    grid: sphere.RegularGrid
    values: np.ndarray
    times: list = field(default=None)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        shape = (self.grid.n_lat, self.grid.n_lon, 2)
        if vals.ndim == 3:
            vals = vals[None]
        if vals.shape[1:] != shape:
            raise ValueError(f"values must have shape (n_reps,) + {shape}, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("observation values must be finite")
        self.values = vals
        if self.times is None:
            self.times = list(range(vals.shape[0]))

    @property
    def n_reps(self):
        return self.values.shape[0]

    def to_observation_set(self):
        vals = self.values.reshape(self.n_reps, self.grid.n, 2)
        return ObservationSet(self.grid.locations(), vals, self.times)


def as_grid(obs, tol=1e-7):
    """Rearrange an ObservationSet onto a full-longitude regular grid.

    Raises :class:`GridError` when the locations are not exactly the nodes
    of such a grid (every latitude ring complete, longitudes 2*pi*j/n_lon).
    """
    if isinstance(obs, GridObservations):
        return obs
    _, theta, phi = sphere.as_arrays(obs.locations)
    rings = []
    for t in np.sort(theta):
        if not rings or abs(t - rings[-1]) > tol:
            rings.append(t)
    n_lat = len(rings)
    if obs.n % n_lat:
        raise GridError("latitude rings have unequal sizes; use the dense likelihood")
    n_lon = obs.n // n_lat
    lat_idx = np.array([np.argmin(np.abs(np.asarray(rings) - t)) for t in theta])
    lon_pos = phi * n_lon / (2 * np.pi)
    lon_idx = np.rint(lon_pos).astype(int) % n_lon
    if np.any(np.abs(lon_pos - np.rint(lon_pos)) > tol * n_lon):
        raise GridError("longitudes are not a full circle of equal steps from 0; "
                        "use the dense likelihood")
    slot = lat_idx * n_lon + lon_idx
    if np.unique(slot).size != obs.n:
        raise GridError("locations do not cover every grid node exactly once; "
                        "use the dense likelihood")
    grid = sphere.RegularGrid(tuple(float(t) for t in rings), int(n_lon))
    vals = np.empty((obs.n_reps, grid.n, 2))
    vals[:, slot] = obs.values
    return GridObservations(grid, vals.reshape(obs.n_reps, n_lat, n_lon, 2), obs.times)
