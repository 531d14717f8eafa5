"""Geometric shape functionals: curvature integrals, perimeter and volume.

Mean curvature ``H`` is the undivided trace of the shape operator
(``H = 2/r`` on a sphere of radius ``r`` in 3-D).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, LemmaViolation
from .geometry import ShapeSpec, evaluate, grid_axes, grid_points
from .reach import uniform_ball_check
from .tube import TubeQuadrature, build_tube, surface_integral

# position weights g(x) for the weighted-curvature integrand
WEIGHTS = {
    "unit": lambda x: np.ones(len(x)),
    "height": lambda x: x[:, -1],
    "radius2": lambda x: np.einsum("ij,ij->i", x, x),
    "one_plus_radius2": lambda x: 1.0 + np.einsum("ij,ij->i", x, x),
}

CLI_NAMES = {
    "area": "constant_one",
    "mean-curvature": "mean_curvature",
    "willmore": "willmore",
    "normal-moment": "normal_moment",
    "weighted-curvature": "position_weighted",
}


@dataclass
class QuadParams:
    h: float = 0.1
    spacing: float = 0.02


@dataclass
class IntegrandSpec:
    """Integrand ``j(x, nu, H)`` of a curvature functional.

    ``params``: ``normal_moment`` takes ``{"direction": e}``;
    ``position_weighted`` takes ``{"weight": name}`` from :data:`WEIGHTS`;
    ``custom_tabulated`` takes ``{"callback": fn(x, nu, H) -> values}``.
    """

    kind: str
    params: dict = field(default_factory=dict)

    KINDS = ("constant_one", "mean_curvature", "willmore", "normal_moment", "position_weighted", "custom_tabulated")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidInput(f"unknown integrand {self.kind!r}")

    @classmethod
    def from_name(cls, name: str, **params) -> "IntegrandSpec":
        if name in CLI_NAMES:
            return cls(CLI_NAMES[name], params)
        return cls(name, params)

    @property
    def convex_in_H(self) -> bool:
        # custom integrands are not known to be convex
        return self.kind != "custom_tabulated"

    def __call__(self, x, nu, H):
        k = self.kind
        if k == "constant_one":
            return np.ones(len(x))
        if k == "mean_curvature":
            return H
        if k == "willmore":
            return H * H
        if k == "normal_moment":
            e = np.asarray(self.params.get("direction", np.eye(x.shape[1])[-1]), dtype=float)
            return nu @ (e / np.linalg.norm(e))
        if k == "position_weighted":
            return WEIGHTS[self.params.get("weight", "one_plus_radius2")](x) * H
        return np.asarray(self.params["callback"](x, nu, H), dtype=float)


def _certify(shape, quad, r0):
    if r0 is None:
        return
    if quad.h >= r0:
        raise InvalidInput(f"tube width {quad.h} must be below r0 = {r0}")
    cert = uniform_ball_check(shape, r0)
    if not cert.passed:
        raise LemmaViolation("uniform ball condition", f"shape fails (B_h) at h = r0 = {r0}")


def eval_F1_on(tube: TubeQuadrature, j: IntegrandSpec) -> float:
    return surface_integral(tube, j(tube.x, tube.nu, tube.mean_curvature))


def eval_F1(shape: ShapeSpec, j: IntegrandSpec, quad: QuadParams = None, r0: float = None) -> float:
    quad = quad or QuadParams()
    _certify(shape, quad, r0)
    return eval_F1_on(build_tube(shape, quad.h, quad.spacing), j)


def perimeter(shape: ShapeSpec, quad: QuadParams = None, r0: float = None) -> float:
    return eval_F1(shape, IntegrandSpec("constant_one"), quad, r0)


def volume(shape: ShapeSpec, spacing: float, subcells: int = 1) -> float:
    """Cell count of ``b(centre) < 0`` times cell volume.

    With ``subcells = k > 1`` the cells within ``sqrt(d) * spacing`` of the
    boundary are split into ``k^d`` subcells and counted fractionally.
    """
    if not spacing > 0:
        raise InvalidInput("spacing must be positive")
    d = shape.dim
    box = shape.bounding_box(2 * spacing)
    axes = grid_axes(box, spacing, cell_centers=True)
    total = 0.0
    rest = grid_points(axes[1:])
    cell = spacing ** d
    offsets = None
    if subcells > 1:
        s = (np.arange(subcells) + 0.5) / subcells - 0.5
        offsets = grid_points([s] * d) * spacing
    for a0 in axes[0]:
        pts = np.column_stack([np.full(len(rest), a0), rest])
        b = evaluate(shape, pts, hessian=False).b
        if offsets is None:
            total += np.count_nonzero(b < 0) * cell
            continue
        near = np.abs(b) < np.sqrt(d) * spacing
        total += np.count_nonzero((b < 0) & ~near) * cell
        if near.any():
            sub = (pts[near][:, None, :] + offsets[None]).reshape(-1, d)
            bs = evaluate(shape, sub, hessian=False).b
            total += np.count_nonzero(bs < 0) * cell / len(offsets)
    return float(total)


def unit_ball_volume(d: int) -> float:
    return {2: np.pi, 3: 4.0 * np.pi / 3.0}[d]
