import numpy as np
import pytest
from hypothesis import settings

from tubecalc.geometry import ShapeSpec
from tubecalc.tube import build_tube

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def sphere():
    return ShapeSpec.ball(1.0)


@pytest.fixture(scope="session")
def torus():
    return ShapeSpec.torus(2.0, 0.5)


@pytest.fixture(scope="session")
def sphere_tube(sphere):
    return build_tube(sphere, 0.1, 0.02)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


def random_shell_points(rng, n, r_lo, r_hi, dim=3):
    """Uniform directions, radii uniform in [r_lo, r_hi]."""
    u = rng.standard_normal((n, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * rng.uniform(r_lo, r_hi, n)[:, None]


def torus_points(rng, n, R=2.0, r=0.5, spread=0.2):
    """Points within ``spread`` of the torus surface."""
    phi = rng.uniform(0, 2 * np.pi, n)
    theta = rng.uniform(0, 2 * np.pi, n)
    rho = r + rng.uniform(-spread, spread, n)
    s = R + rho * np.cos(theta)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), rho * np.sin(theta)])


# acceptance lines collected by tests/test_acceptance.py, printed after the run
ACCEPTANCE_LINES = {}


def record_criterion(key, passed, detail):
    ACCEPTANCE_LINES[key] = (bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split(".")[0]), k)):
        passed, detail = ACCEPTANCE_LINES[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
