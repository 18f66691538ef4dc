import numpy as np
import pytest

from tangent_matern import build_model, regular_grid

TRUTH = (1.0, 1.0, 0.5, 3.0, 4.0, 0.5, 0.1, 0.1)


@pytest.fixture
def truth_model():
    return build_model("tmm", TRUTH)


@pytest.fixture
def grid_6x12():
    return regular_grid(6, 12, -50.0, 50.0)


def random_locations(rng, n, max_abs_lat=85.0):
    from tangent_matern import from_latlon

    lat = np.degrees(np.arcsin(rng.uniform(-1, 1, n)))
    lat = np.clip(lat, -max_abs_lat, max_abs_lat)
    lon = rng.uniform(0, 360, n)
    return [from_latlon(a, b) for a, b in zip(lat, lon)]


def random_tmm_theta(rng, tau=True):
    from tangent_matern.kernels import rho_bound

    nu1, nu2 = rng.uniform(1.2, 5.0, 2)
    rho = rng.uniform(-1, 1) * rho_bound(nu1, nu2) * 0.999
    taus = rng.uniform(0.01, 0.5, 2) if tau else (0.0, 0.0)
    return (rng.uniform(0.2, 3), rng.uniform(0.2, 3), rho, nu1, nu2,
            rng.uniform(0.1, 2.0), *taus)


# one (criterion number, line) entry per acceptance check, printed at the end
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
