"""Sampled certification of the uniform ball condition and reach estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormal, InvalidInput
from .geometry import ShapeSpec, evaluate
from .sampling import boundary_points


def default_samples(shape: ShapeSpec) -> int:
    return 4096 if shape.dim == 3 else 512


@dataclass
class ReachCertificate:
    h_tested: float
    passed: bool
    worst_point: np.ndarray
    worst_margin: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "h": self.h_tested,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "worst_point": [float(v) for v in self.worst_point],
            "n_samples": self.n_samples,
        }


def uniform_ball_check(shape: ShapeSpec, h: float, n_samples: int = None, seed: int = 0) -> ReachCertificate:
    """Test the two tangent balls of radius ``h`` at quasi-uniform boundary points.

    With ``d_x`` the outward normal, the balls ``B_h(x - h d_x)`` and
    ``B_h(x + h d_x)`` lie inside / outside the shape iff
    ``b(x - h d_x) <= -h`` and ``b(x + h d_x) >= h``.  The margin at ``x`` is
    the smaller slack of the two inequalities.
    """
    if not h > 0:
        raise InvalidInput("h must be positive")
    n_samples = default_samples(shape) if n_samples is None else int(n_samples)
    if n_samples < 100:
        raise InvalidInput("n_samples must be at least 100")
    tol = 1e-6 * shape.diameter
    x, nu = boundary_points(shape, n_samples, seed)
    norms = np.linalg.norm(nu, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        k = int(np.argmax(np.abs(norms - 1.0)))
        raise DegenerateNormal(f"|grad b| = {norms[k]:.6g} at {x[k].tolist()}")
    b_in = evaluate(shape, x - h * nu, hessian=False).b
    b_out = evaluate(shape, x + h * nu, hessian=False).b
    margin = np.minimum(-h - b_in, b_out - h)
    k = int(np.argmin(margin))  # first index on ties
    worst = float(margin[k])
    return ReachCertificate(float(h), bool(worst >= -tol), x[k], worst, len(x))


def estimate_reach(shape: ShapeSpec, tol_bisect: float = 1e-3, n_samples: int = None, seed: int = 0) -> float:
    """Largest passing ``h`` found by bisection on ``[tol_bisect, diam]``."""
    if not tol_bisect > 0:
        raise InvalidInput("tol_bisect must be positive")
    lo, hi = tol_bisect, shape.diameter
    if not uniform_ball_check(shape, lo, n_samples, seed).passed:
        return 0.0
    if uniform_ball_check(shape, hi, n_samples, seed).passed:
        return hi
    while hi - lo > tol_bisect:
        mid = 0.5 * (lo + hi)
        if uniform_ball_check(shape, mid, n_samples, seed).passed:
            lo = mid
        else:
            hi = mid
    return lo
