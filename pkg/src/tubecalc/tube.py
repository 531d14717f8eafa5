"""Tubular-neighbourhood quadrature.

A tube ``U_h`` of half-width ``h`` around the boundary is covered by the grid
cells whose centre satisfies ``|b| < h``.  Each cell centre ``y`` is written in
extrusion coordinates ``y = x + t * nu(x)`` (footpoint ``x``, offset ``t``),
and surface integrals are recovered from volume sums through

    int_Gamma f dmu = (1 / 2h) int_{U_h} f(p(y)) / J(t, p(y)) dy,

where ``J = prod_i (1 + t kappa_i)`` is the Jacobian of the extrusion map.
The reciprocal weight makes the identity exact for every ``h`` below the
reach, so quadrature results do not drift with the tube width.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import (
    AmbiguousNormalEigenvalue,
    DegenerateExtrusion,
    InvalidInput,
    SpacingTooCoarse,
    TubeOverlapsMedialAxis,
)
from .geometry import ShapeSpec, evaluate, grid_points


@dataclass
class TubeNode:
    y: np.ndarray
    t: float
    x: np.ndarray
    nu: np.ndarray
    shape_op_eigs: np.ndarray
    J: float
    cell_volume: float


@dataclass
class CurvatureSample:
    x: np.ndarray
    H: float
    K: float
    kappas: np.ndarray


def principal_curvatures(hess: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Eigenvalues of the Hessians with the normal-direction eigenvalue removed.

    The dropped eigenvalue is the one whose eigenvector is best aligned with
    the normal; on a true footpoint Hessian that eigenvalue is zero.  Output is
    sorted ascending, shape ``(N, d - 1)``.
    """
    w, V = np.linalg.eigh(hess)
    align = np.abs(np.einsum("nij,ni->nj", V, normal))
    drop = np.argmax(align, axis=1)
    keep = np.ones_like(w, dtype=bool)
    keep[np.arange(len(w)), drop] = False
    return w[keep].reshape(len(w), -1)


def jacobian_factor(t, kappas):
    """``prod_i (1 + t kappa_i)``; scalar or batched over leading axes."""
    t = np.asarray(t, dtype=float)
    kappas = np.asarray(kappas, dtype=float)
    factors = 1.0 + t[..., None] * kappas
    if np.any(factors <= 0):
        raise DegenerateExtrusion("1 + t*kappa <= 0: tube reaches a focal point")
    J = np.prod(factors, axis=-1)
    return float(J) if J.ndim == 0 else J


@dataclass
class TubeQuadrature:
    """Struct-of-arrays tube; row ``i`` is one :class:`TubeNode`."""

    shape: ShapeSpec
    h: float
    spacing: float
    y: np.ndarray
    t: np.ndarray
    x: np.ndarray
    nu: np.ndarray
    kappas: np.ndarray
    J: np.ndarray
    hess_foot: np.ndarray
    cell_index: np.ndarray
    origin: np.ndarray

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.shape.dim

    def __len__(self):
        return len(self.t)

    @property
    def weights(self) -> np.ndarray:
        """Surface-measure weight of each node: ``cell_volume / (2h J)``."""
        return self.cell_volume / (2.0 * self.h * self.J)

    @property
    def mean_curvature(self) -> np.ndarray:
        return self.kappas.sum(axis=1)

    def node(self, i: int) -> TubeNode:
        return TubeNode(
            self.y[i], float(self.t[i]), self.x[i], self.nu[i], self.kappas[i], float(self.J[i]), self.cell_volume
        )

    def nodes(self):
        for i in range(len(self)):
            yield self.node(i)

    def to_csv(self, path):
        d = self.shape.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                [f"y{i}" for i in range(d)]
                + ["t"]
                + [f"x{i}" for i in range(d)]
                + [f"kappa{i}" for i in range(d - 1)]
                + ["J", "cell_volume"]
            )
            for i in range(len(self)):
                w.writerow(
                    list(self.y[i]) + [self.t[i]] + list(self.x[i]) + list(self.kappas[i]) + [self.J[i], self.cell_volume]
                )


def tube_grid(shape: ShapeSpec, h: float, spacing: float):
    """Cell-centre grid aligned to the origin, covering the shape's box padded by h."""
    lo_box = shape.bounding_box(h + 2 * spacing)
    origin = np.floor(np.array(lo_box.lo) / spacing) * spacing
    hi = np.array(lo_box.hi)
    counts = np.ceil((hi - origin) / spacing).astype(int)
    axes = [origin[i] + (np.arange(counts[i]) + 0.5) * spacing for i in range(shape.dim)]
    return origin, axes


def build_tube(shape: ShapeSpec, h: float, spacing: float, check_medial: bool = True) -> TubeQuadrature:
    """Quadrature nodes at grid cell centres with ``|b| < h``."""
    if not (h > 0 and spacing > 0):
        raise InvalidInput("h and spacing must be positive")
    if not spacing < h / 2:
        raise SpacingTooCoarse(f"spacing {spacing} must be below h/2 = {h / 2}")
    origin, axes = tube_grid(shape, h, spacing)
    n_cells = np.prod([len(a) for a in axes], dtype=float)
    if n_cells > 6e7:
        raise InvalidInput(f"tube grid of {n_cells:.3g} cells is too large")
    # coarse pass: b only, one axis-slab at a time to bound memory
    sel = []
    rest = [a for a in axes[1:]]
    sub = grid_points(rest)
    for i, a0 in enumerate(axes[0]):
        pts = np.column_stack([np.full(len(sub), a0), sub])
        b = evaluate(shape, pts, hessian=False).b
        k = np.flatnonzero(np.abs(b) < h)
        if len(k):
            idx_rest = np.stack(np.unravel_index(k, [len(a) for a in rest]), axis=1)
            sel.append(np.column_stack([np.full(len(k), i), idx_rest]))
    if not sel:
        raise InvalidInput("tube is empty")
    cell_index = np.concatenate(sel)
    y = origin + (cell_index + 0.5) * spacing
    f = evaluate(shape, y, hessian=False, medial_check=check_medial)
    if check_medial and f.medial.any():
        k = int(np.argmax(f.medial))
        raise TubeOverlapsMedialAxis(f"tube cell at {y[k].tolist()} has competing footpoints")
    if not f.converged.all():
        k = int(np.argmin(f.converged))
        raise TubeOverlapsMedialAxis(f"footpoint projection failed at {y[k].tolist()}")
    foot = evaluate(shape, f.foot, hessian=True)
    kappas = principal_curvatures(foot.hess, foot.grad)
    try:
        J = jacobian_factor(f.b, kappas)
    except DegenerateExtrusion as exc:
        raise DegenerateExtrusion(f"h = {h} exceeds a focal distance: {exc}") from exc
    return TubeQuadrature(
        shape=shape,
        h=float(h),
        spacing=float(spacing),
        y=y,
        t=f.b,
        x=foot.foot,
        nu=foot.grad,
        kappas=kappas,
        J=J,
        hess_foot=foot.hess,
        cell_index=cell_index,
        origin=origin,
    )


def surface_integral(quad: TubeQuadrature, f) -> float:
    """``(1/2h) sum f(x) cell_volume / J`` over the tube nodes.

    ``f`` is either an array of values at the footpoints or a callable
    ``f(x)`` / ``f(x, nu)`` on ``(N, d)`` arrays.
    """
    if callable(f):
        try:
            vals = f(quad.x, quad.nu)
        except TypeError:
            vals = f(quad.x)
    else:
        vals = f
    vals = np.broadcast_to(np.asarray(vals, dtype=float), (len(quad),))
    return float(np.sum(vals * quad.weights))


def curvature_at(shape: ShapeSpec, x) -> CurvatureSample:
    x = np.asarray(x, dtype=float)
    f = evaluate(shape, x[None, :], hessian=True)
    if abs(f.b[0]) > max(1e3 * shape.tol_surface, 1e-8 * shape.diameter):
        raise InvalidInput(f"point is not on the surface (b = {f.b[0]:.3g})")
    H, n = f.hess[0], f.grad[0]
    w, V = np.linalg.eigh(H)
    k = int(np.argmax(np.abs(V.T @ n)))
    others = np.delete(w, k)
    nonzero = np.abs(others)[np.abs(others) > 1e-12 / shape.diameter]
    if len(nonzero) and abs(w[k]) >= 0.1 * nonzero.min():
        raise AmbiguousNormalEigenvalue(f"no eigenvalue of the Hessian vanishes along the normal at {x.tolist()}")
    return CurvatureSample(x, float(others.sum()), float(np.prod(others)), others)


def hessian_at_footpoint(shape: ShapeSpec, y) -> np.ndarray:
    """Hessian of b at ``p(y)`` from the Hessian at ``y``: ``H (I - b H)^{-1}``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    f = evaluate(shape, y, hessian=True)
    A = np.eye(shape.dim)[None] - f.b[:, None, None] * f.hess
    if np.any(np.abs(np.linalg.det(A)) < 1e-12):
        raise DegenerateExtrusion("Id - b Hess(b) is singular")
    out = np.linalg.solve(A.transpose(0, 2, 1), f.hess.transpose(0, 2, 1)).transpose(0, 2, 1)
    return out[0] if out.shape[0] == 1 else out
