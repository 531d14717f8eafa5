"""Deterministic low-discrepancy sampling of boxes and boundaries."""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc

from .geometry import AmbientBox, ShapeSpec, evaluate


def halton_box(box: AmbientBox, n: int, seed: int = 0) -> np.ndarray:
    sampler = qmc.Halton(d=box.dim, scramble=True, seed=seed)
    u = sampler.random(n)
    return qmc.scale(u, box.lo, box.hi)


def boundary_points(shape: ShapeSpec, n: int, seed: int = 0, pad: float = None):
    """Quasi-uniform boundary points: projections of Halton points of a padded bounding box.

    Points whose projection is not unique (medial axis) or did not converge are
    discarded; the first ``n`` survivors are returned together with their normals.
    """
    if pad is None:
        pad = 0.1 * shape.diameter
    box = shape.bounding_box(pad)
    feet, normals = [], []
    have, draw, offset = 0, 2 * n, 0
    while have < n:
        X = halton_box(box, offset + draw, seed)[offset:]
        offset += draw
        f = evaluate(shape, X, hessian=False, medial_check=True)
        ok = f.valid
        feet.append(f.foot[ok])
        normals.append(f.grad[ok])
        have += int(ok.sum())
        if offset > 50 * n:
            break
    feet = np.concatenate(feet)[:n]
    normals = np.concatenate(normals)[:n]
    # re-evaluate on the surface so normals are exactly those of the footpoints
    g = evaluate(shape, feet, hessian=False)
    return feet, g.grad
