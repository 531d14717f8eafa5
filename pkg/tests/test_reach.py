import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tubecalc.geometry import ShapeSpec, evaluate
from tubecalc.reach import estimate_reach, uniform_ball_check
from tubecalc.sampling import boundary_points
from tubecalc.tube import principal_curvatures

TOL = 1e-3


def torus_margin_scan(R, r, h, n=400):
    """Margin of the ball test on a (theta, phi) lattice using the analytic torus distance."""
    th, ph = np.meshgrid(np.linspace(0, 2 * np.pi, n), np.linspace(0, 2 * np.pi, n // 4))
    th, ph = th.ravel(), ph.ravel()
    nu = np.column_stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), np.sin(th)])
    s = R + r * np.cos(th)
    x = np.column_stack([s * np.cos(ph), s * np.sin(ph), r * np.sin(th)])

    def b(p):
        return np.hypot(np.hypot(p[:, 0], p[:, 1]) - R, p[:, 2]) - r

    return min(np.min(-h - b(x - h * nu)), np.min(b(x + h * nu) - h))


@pytest.mark.parametrize("h, expected", [(0.5, True), (1.2, False)])
def test_sphere_certificate(h, expected):
    cert = uniform_ball_check(ShapeSpec.ball(1.0), h)
    assert cert.passed is expected
    assert set(cert.to_dict()) >= {"h", "passed", "worst_margin", "worst_point"}


def test_torus_certificate_matches_scan(torus):
    cert = uniform_ball_check(torus, 0.4)
    assert cert.passed
    assert torus_margin_scan(2.0, 0.5, 0.4) >= -1e-12
    assert torus_margin_scan(2.0, 0.5, 0.6) < 0
    assert not uniform_ball_check(torus, 0.6).passed


@pytest.mark.parametrize(
    "shape, expected",
    [
        (ShapeSpec.ball(1.0), 1.0),
        (ShapeSpec.torus(2.0, 0.5), 0.5),
        (ShapeSpec.union_of_balls([(1.0, (-2.0, 0, 0)), (1.0, (2.0, 0, 0))]), 1.0),
        (ShapeSpec.ellipsoid(1.5, 1.0, 1.0), 1.0 / 1.5),  # min radius of curvature b^2/a
        (ShapeSpec.ball(1.0, dim=2), 1.0),
    ],
    ids=["sphere", "torus", "two-balls", "ellipsoid", "circle"],
)
def test_estimate_reach(shape, expected):
    assert estimate_reach(shape, TOL) == pytest.approx(expected, abs=2 * TOL)


def test_two_balls_gap_limited():
    # gap 0.5 between unit balls: the outer balls must squeeze between them
    shape = ShapeSpec.union_of_balls([(1.0, (-1.25, 0, 0)), (1.0, (1.25, 0, 0))])
    assert estimate_reach(shape, TOL) == pytest.approx(0.25, abs=2 * TOL)


@pytest.mark.parametrize("shape", [ShapeSpec.ball(1.0), ShapeSpec.torus(2, 0.5), ShapeSpec.ellipsoid(1.4, 1.0, 0.9)],
                         ids=lambda s: s.kind)
def test_monotone_ladder(shape):
    ladder = np.linspace(0.2, 1.4, 5)
    passed = [uniform_ball_check(shape, h).passed for h in ladder]
    # once it fails, every larger h fails
    first_fail = passed.index(False) if False in passed else len(passed)
    assert all(passed[:first_fail]) and not any(passed[first_fail:])


@pytest.mark.parametrize("shape", [ShapeSpec.torus(2, 0.5), ShapeSpec.ellipsoid(1.4, 1.0, 0.9)], ids=lambda s: s.kind)
def test_reach_below_curvature_radius(shape):
    r = estimate_reach(shape, TOL, n_samples=1024)
    feet, _ = boundary_points(shape, 2000, seed=1)
    f = evaluate(shape, feet)
    kmax = np.max(np.abs(principal_curvatures(f.hess, f.grad)))
    assert r <= 1.0 / kmax + 2 * TOL


@settings(max_examples=6)
@given(lam=st.floats(0.5, 2.0))
def test_scaling_covariance(lam):
    shape = ShapeSpec.ellipsoid(1.3, 1.0, 0.9)
    r1 = estimate_reach(shape, TOL, n_samples=512)
    r2 = estimate_reach(shape.scaled(lam), TOL * lam, n_samples=512)
    assert r2 == pytest.approx(lam * r1, abs=2 * TOL * max(lam, 1.0))


def test_certificate_deterministic():
    a = uniform_ball_check(ShapeSpec.torus(2, 0.5), 0.45, seed=7).to_dict()
    b = uniform_ball_check(ShapeSpec.torus(2, 0.5), 0.45, seed=7).to_dict()
    assert a == b
