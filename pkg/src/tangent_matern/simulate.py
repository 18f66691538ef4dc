"""Exact Gaussian simulation through a Cholesky factor of the covariance.

Random numbers come from numpy's Philox counter-based bit generator, seeded
through :class:`numpy.random.SeedSequence`; the same integer seed gives the
same stream on every platform.  Deviates are drawn as an
``(n_reps, n, 2)`` array (location-major, component-minor), so two models
simulated with one seed share their deviates.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .covariance import cov_matrix
from .exceptions import NotPositiveDefiniteError

JITTER_STEPS = (1e-12, 1e-10, 1e-8)


def make_rng(seed, *key):
    """Philox generator for ``seed``; ``key`` (ints) derives independent
    sub-streams, e.g. ``make_rng(seed, 3)`` for replicate 3."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def cholesky_with_jitter(sigma, jitter=JITTER_STEPS):
    """Lower Cholesky factor; on failure retry with eps * mean(diag) added
    to the diagonal for each eps in ``jitter``."""
    try:
        return linalg.cholesky(sigma, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(sigma)))
    for eps in jitter:
        try:
            return linalg.cholesky(sigma + eps * scale * np.eye(len(sigma)),
                                   lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
    lam = float(np.linalg.eigvalsh(sigma)[0])
    raise NotPositiveDefiniteError(
        f"Cholesky failed after jitter up to {jitter[-1] if jitter else 0:g}; "
        f"smallest eigenvalue {lam:.3e}", min_eigenvalue=lam)


@dataclass(frozen=True)
class SimulationSpec:
    locations: list
    model: object
    n_reps: int = 1
    seed: int = 0
    jitter: tuple = JITTER_STEPS

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")


def standard_normals(n_reps, n_locations, seed):
    return make_rng(seed).standard_normal((n_reps, n_locations, 2))


def simulate(spec):
    """Draw ``spec.n_reps`` realisations; returns an ``(n_reps, 2n)`` array
    in interleaved (u, v) order."""
    sigma = cov_matrix(spec.locations, spec.model)
    chol = cholesky_with_jitter(sigma, spec.jitter)
    z = standard_normals(spec.n_reps, len(spec.locations), spec.seed)
    return z.reshape(spec.n_reps, -1) @ chol.T


def simulate_values(locations, model, n_reps=1, seed=0):
    """Like :func:`simulate` but shaped ``(n_reps, n, 2)``."""
    out = simulate(SimulationSpec(list(locations), model, n_reps, seed))
    return out.reshape(n_reps, len(locations), 2)
