"""R-converging shape sequences and numerical checks of the limit statements.

For a sequence ``Omega_n -> Omega_inf`` we measure, per member,

- ``sup_b``: sup of ``|b_n - b_inf|`` over a Halton sample of the container
  plus the nodes of a tube around the limit boundary,
- ``sup_gradb``: sup of ``|grad b_n - grad b_inf|`` on that tube,
- perimeter and volume gaps,
- ``jac_tau_dev``: sup of ``|Jac(tau_n) - 1|`` where ``tau_n`` is the
  projection onto the n-th boundary restricted to the limit boundary,
- ``cn_norm``: sup of the operator norm of the gradient-transport correction,
- functional values used for the semicontinuity checks.

Weak-star convergence of the Hessians has no finite-sample certificate; only
the uniform bound ``sup |hess b_n| <= 2 / (r0 - r)`` on the tube is reported.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import InvalidInput, LemmaViolation, ProjectionNotInjective
from .functionals import IntegrandSpec, QuadParams, eval_F1_on, volume
from .geometry import AmbientBox, ShapeSpec, evaluate, grid_axes, grid_points
from .reach import uniform_ball_check
from .sampling import boundary_points, halton_box
from .surface_pde import J2, eval_F2, source
from .tube import build_tube, surface_integral

FAMILIES = ("ellipsoid_to_sphere", "harmonic_decay", "radius_ramp", "constant")

HESSIAN_NOTE = (
    "weak-star W^{2,inf} convergence is not certified by finite samples; "
    "only the uniform Hessian bound on the tube is reported"
)


@dataclass
class ShapeSequence:
    limit: ShapeSpec
    members: list
    family: str
    r0: float
    indices: list = None

    def __post_init__(self):
        if self.indices is None:
            self.indices = list(range(1, len(self.members) + 1))

    @classmethod
    def build(cls, family: str, n_members: int = 6, r0: float = None, amplitude: float = 0.08):
        ns = list(range(1, n_members + 1))
        limit = ShapeSpec.ball(1.0)
        if family == "ellipsoid_to_sphere":
            members = [ShapeSpec.ellipsoid(1.0 + 2.0**-n, 1.0, 1.0) for n in ns]
            default_r0 = 0.6  # smallest radius of curvature is 1 / (1 + 1/2)
        elif family == "harmonic_decay":
            coefs = np.zeros(8)
            coefs[5] = amplitude  # zonal degree-2
            coefs[7] = 0.5 * amplitude  # x^2 - y^2
            members = [ShapeSpec.harmonic_sphere(1.0, list(coefs * 2.0 ** (1 - n))) for n in ns]
            default_r0 = 0.6
        elif family == "radius_ramp":
            members = [ShapeSpec.ball(1.0 + 2.0**-n) for n in ns]
            default_r0 = 0.9
        elif family == "constant":
            members = [limit for _ in ns]
            default_r0 = 0.9
        else:
            raise InvalidInput(f"unknown family {family!r}; choose from {FAMILIES}")
        return cls(limit, members, family, default_r0 if r0 is None else r0, ns)

    def certify(self, n_samples: int = None) -> list:
        """Uniform ball check at r0 for the limit and every member."""
        return [uniform_ball_check(s, self.r0, n_samples) for s in [self.limit, *self.members]]

    def container(self, pad: float = 0.5) -> AmbientBox:
        boxes = [s.bounding_box(pad) for s in [self.limit, *self.members]]
        lo = np.min([b.lo for b in boxes], axis=0)
        hi = np.max([b.hi for b in boxes], axis=0)
        return AmbientBox(tuple(lo), tuple(hi))


def tangent_frames(normals: np.ndarray) -> np.ndarray:
    """Orthonormal bases of the tangent planes, shape ``(N, d, d-1)``."""
    n, d = normals.shape
    frames = np.zeros((n, d, d - 1))
    for i in range(n):
        q, _ = np.linalg.qr(np.column_stack([normals[i], np.eye(d)]))
        frames[i] = q[:, 1:d]
    return frames


def _fd_step(shape):
    return 1e-5 * shape.diameter


def transport_jacobians(limit: ShapeSpec, member: ShapeSpec, x: np.ndarray) -> np.ndarray:
    """``Jac(tau_n)`` at limit-boundary points ``x`` by central differences of ``p_n``."""
    x = np.atleast_2d(x)
    nu = evaluate(limit, x, hessian=False).grad
    E = tangent_frames(nu)
    s = _fd_step(limit)
    n, d, k = E.shape
    cols = np.zeros((n, d, k))
    for i in range(k):
        fp = evaluate(member, x + s * E[:, :, i], hessian=False, medial_check=True)
        fm = evaluate(member, x - s * E[:, :, i], hessian=False, medial_check=True)
        if fp.medial.any() or fm.medial.any() or not (fp.converged.all() and fm.converged.all()):
            raise ProjectionNotInjective("competing footpoints on the member surface")
        # a footpoint jump far beyond the frame offset means x straddles the member's medial axis
        jump = np.linalg.norm(fp.foot - fm.foot, axis=1)
        if np.any(jump > 1e3 * 2 * s):
            k = int(np.argmax(jump))
            raise ProjectionNotInjective(f"footpoints split across the medial axis near {x[k].tolist()}")
        cols[:, :, i] = (fp.foot - fm.foot) / (2 * s)
    gram = np.einsum("nji,njk->nik", cols, cols)
    det = np.linalg.det(gram)
    if np.any(det <= 0):
        raise ProjectionNotInjective("projection differential is singular")
    return np.sqrt(det)


def transport_jacobian(limit: ShapeSpec, member: ShapeSpec, x) -> float:
    return float(transport_jacobians(limit, member, np.asarray(x, dtype=float)[None, :])[0])


def cn_matrices(limit: ShapeSpec, member: ShapeSpec, x: np.ndarray) -> np.ndarray:
    """Gradient-transport correction at limit-boundary points ``x``.

    With gradients as row vectors,
    ``C = (gn^T gn - I) ginf^T ginf + b_n H_n (ginf^T ginf - I)``.
    """
    x = np.atleast_2d(x)
    fi = evaluate(limit, x, hessian=False)
    fn = evaluate(member, x, hessian=True)
    d = x.shape[1]
    I = np.eye(d)[None]
    Nn = fn.grad[:, :, None] * fn.grad[:, None, :]
    Ni = fi.grad[:, :, None] * fi.grad[:, None, :]
    return (Nn - I) @ Ni + fn.b[:, None, None] * fn.hess @ (Ni - I)


def cn_matrix(limit: ShapeSpec, member: ShapeSpec, x) -> np.ndarray:
    return cn_matrices(limit, member, np.asarray(x, dtype=float)[None, :])[0]


def gradient_transport_defect(limit: ShapeSpec, member: ShapeSpec, x: np.ndarray, f=None) -> np.ndarray:
    """``|grad_inf (f o tau_n) - grad_n f(tau_n) (I + C_n)|`` with both sides computed independently.

    The left side differentiates ``f o p_n`` along the limit tangent frame by
    central differences; the right side uses the member normal at ``tau_n(x)``
    and :func:`cn_matrices`.  ``f`` defaults to the last coordinate and must
    be linear so that its ambient gradient is exact.
    """
    x = np.atleast_2d(x)
    d = x.shape[1]
    grad_f = np.eye(d)[-1] if f is None else np.asarray(f, dtype=float)
    nu = evaluate(limit, x, hessian=False).grad
    E = tangent_frames(nu)
    s = _fd_step(limit)
    lhs = np.zeros_like(x)
    for i in range(d - 1):
        pp = evaluate(member, x + s * E[:, :, i], hessian=False).foot
        pm = evaluate(member, x - s * E[:, :, i], hessian=False).foot
        deriv = (pp - pm) @ grad_f / (2 * s)
        lhs += deriv[:, None] * E[:, :, i]
    nn = evaluate(member, x, hessian=False).grad  # normal of Gamma_n at tau_n(x)
    gn = grad_f[None, :] - (nn @ grad_f)[:, None] * nn
    C = cn_matrices(limit, member, x)
    rhs = gn + np.einsum("ni,nij->nj", gn, C)
    return np.linalg.norm(lhs - rhs, axis=1)


def inside_components(shape: ShapeSpec, spacing: float = 0.05) -> int:
    """Connected components of the inside region on a coarse grid (topology proxy, never asserted)."""
    axes = grid_axes(shape.bounding_box(2 * spacing), spacing, cell_centers=True)
    b = evaluate(shape, grid_points(axes), hessian=False).b.reshape([len(a) for a in axes])
    _, count = ndimage.label(b < 0)
    return int(count)


@dataclass
class LabConfig:
    quad: QuadParams = field(default_factory=QuadParams)
    lb_quad: QuadParams = field(default_factory=lambda: QuadParams(h=0.15, spacing=0.05))
    volume_spacing: float = 0.02
    n_box_samples: int = 100_000
    n_boundary_samples: int = 2000
    f1: str = "willmore"
    f2_integrand: str = "grad-sq"
    f2_source: str = "z"
    track_f2: bool = True
    tol_lsc: float = 0.5
    tol_lsc_f2: float = 0.05
    perim_rel_threshold: float = 1e-2
    vol_rel_threshold: float = 1e-2
    jac_threshold: float = 0.02
    cn_threshold: float = 0.05
    seed: int = 0
    workers: int = 1


@dataclass
class ConvergenceReport:
    family: str
    indices: list
    sup_b: np.ndarray
    sup_gradb: np.ndarray
    hess_sup: np.ndarray
    hess_bound: float
    perim_gap: np.ndarray
    vol_gap: np.ndarray
    jac_tau_dev: np.ndarray
    cn_norm: np.ndarray
    transport_defect: np.ndarray
    inclusion_excess: np.ndarray
    components: np.ndarray
    F1_n: np.ndarray
    F2_n: np.ndarray
    limit_values: dict
    assertions: list = field(default_factory=list)
    note: str = HESSIAN_NOTE

    COLUMNS = (
        "sup_b", "sup_gradb", "hess_sup", "perim_gap", "vol_gap", "jac_tau_dev", "cn_norm",
        "transport_defect", "inclusion_excess", "components", "F1_n", "F2_n",
    )

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def rows(self):
        for k, n in enumerate(self.indices):
            yield {"n": n, **{c: float(getattr(self, c)[k]) for c in self.COLUMNS}}

    def _json_rows(self):
        return [{k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in row.items()} for row in self.rows()]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["n", *self.COLUMNS])
            w.writeheader()
            for row in self.rows():
                w.writerow(row)

    def summary(self) -> dict:
        return {
            "family": self.family,
            "indices": list(self.indices),
            "per_member": self._json_rows(),
            "limit": {k: (None if np.isnan(v) else float(v)) for k, v in self.limit_values.items()},
            "hessian_bound": self.hess_bound,
            "note": self.note,
            "assertions": self.assertions,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _thirds(values):
    v = np.asarray(values, dtype=float)
    k = max(1, len(v) // 3)
    return float(np.median(v[:k])), float(np.median(v[-k:]))


@dataclass
class _LimitData:
    tube: object
    tube_r: object
    grad_r: np.ndarray
    box_pts: np.ndarray
    b_box: np.ndarray
    b_tube: np.ndarray
    surf: np.ndarray
    perimeter: float
    volume: float
    F1: float
    F2: float
    incl_pts: np.ndarray
    incl_b: np.ndarray
    incl_h: float


def _limit_data(seq: ShapeSequence, cfg: LabConfig) -> _LimitData:
    lim = seq.limit
    r = 0.5 * seq.r0
    spacing_r = min(cfg.quad.spacing * 2, r / 3)
    tube_r = build_tube(lim, r, spacing_r)
    box_pts = halton_box(seq.container(), cfg.n_box_samples, cfg.seed)
    f_tube = evaluate(lim, tube_r.y, hessian=False)
    surf, _ = boundary_points(lim, cfg.n_boundary_samples, cfg.seed)
    tube = build_tube(lim, cfg.quad.h, cfg.quad.spacing)
    j1 = IntegrandSpec.from_name(cfg.f1)
    F2 = np.nan
    if cfg.track_f2:
        F2 = eval_F2(lim, J2[cfg.f2_integrand], source(cfg.f2_source), cfg.lb_quad)
    h_incl = 0.2 * seq.r0
    tube_incl = build_tube(lim, h_incl, min(spacing_r, h_incl / 3))
    return _LimitData(
        tube=tube,
        tube_r=tube_r,
        grad_r=f_tube.grad,
        box_pts=box_pts,
        b_box=evaluate(lim, box_pts, hessian=False).b,
        b_tube=f_tube.b,
        surf=surf,
        perimeter=surface_integral(tube, 1.0),
        volume=volume(lim, cfg.volume_spacing),
        F1=eval_F1_on(tube, j1),
        F2=float(F2),
        incl_pts=tube_incl.y,
        incl_b=tube_incl.t,
        incl_h=h_incl,
    )


def rconv_metrics(seq: ShapeSequence, k: int, cfg: LabConfig = None, limit_data: _LimitData = None) -> dict:
    """Metrics row for the member at list position ``k``."""
    cfg = cfg or LabConfig()
    L = limit_data or _limit_data(seq, cfg)
    m = seq.members[k]
    fb = evaluate(m, L.box_pts, hessian=False).b
    ft = evaluate(m, L.tube_r.y, hessian=True)
    sup_b = max(np.abs(fb - L.b_box).max(), np.abs(ft.b - L.b_tube).max())
    sup_gradb = np.linalg.norm(ft.grad - L.grad_r, axis=1).max()
    hess_sup = np.linalg.norm(ft.hess, ord=2, axis=(1, 2)).max()
    tube = build_tube(m, cfg.quad.h, cfg.quad.spacing)
    perim = surface_integral(tube, 1.0)
    vol = volume(m, cfg.volume_spacing)
    jac = transport_jacobians(seq.limit, m, L.surf)
    C = cn_matrices(seq.limit, m, L.surf)
    cn = np.linalg.norm(C, ord=2, axis=(1, 2)).max()
    defect = gradient_transport_defect(seq.limit, m, L.surf).max()
    # U_{h-t}(limit) must lie in U_h(member) once sup|b_n - b| <= t; t = max(h^2, sup_b)
    t_incl = max(L.incl_h**2, sup_b)
    incl_excess = np.nan
    if t_incl < L.incl_h:
        sel = np.abs(L.incl_b) < L.incl_h - t_incl
        b_incl = evaluate(m, L.incl_pts[sel], hessian=False).b
        incl_excess = np.abs(b_incl).max() - L.incl_h
    F1 = eval_F1_on(tube, IntegrandSpec.from_name(cfg.f1))
    F2 = np.nan
    if cfg.track_f2:
        F2 = eval_F2(m, J2[cfg.f2_integrand], source(cfg.f2_source), cfg.lb_quad)
    return {
        "sup_b": float(sup_b),
        "sup_gradb": float(sup_gradb),
        "hess_sup": float(hess_sup),
        "perim_gap": float(perim - L.perimeter),
        "vol_gap": float(vol - L.volume),
        "jac_tau_dev": float(np.abs(jac - 1.0).max()),
        "cn_norm": float(cn),
        "transport_defect": float(defect),
        "inclusion_excess": float(incl_excess),
        "components": float(inside_components(m)),
        "F1_n": float(F1),
        "F2_n": float(F2),
    }


def _assert(name, passed, value, threshold):
    return {"lemma": name, "passed": bool(passed), "value": float(value), "threshold": float(threshold)}


def run_sequence_experiment(seq: ShapeSequence, cfg: LabConfig = None, raise_on_failure: bool = False) -> ConvergenceReport:
    cfg = cfg or LabConfig()
    L = _limit_data(seq, cfg)
    ks = range(len(seq.members))
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            rows = list(pool.map(lambda k: rconv_metrics(seq, k, cfg, L), ks))
    else:
        rows = [rconv_metrics(seq, k, cfg, L) for k in ks]
    col = {c: np.array([r[c] for r in rows]) for c in ConvergenceReport.COLUMNS}
    r = 0.5 * seq.r0
    report = ConvergenceReport(
        family=seq.family,
        indices=list(seq.indices),
        hess_bound=2.0 / (seq.r0 - r),
        limit_values={"perimeter": L.perimeter, "volume": L.volume, "F1": L.F1, "F2": L.F2},
        **col,
    )
    A = report.assertions
    # eventually decreasing: median of the last third not above that of the first third
    for name, v, thr in (
        ("perimeter_continuity", np.abs(col["perim_gap"]) / L.perimeter, cfg.perim_rel_threshold),
        ("volume_continuity", np.abs(col["vol_gap"]) / L.volume, cfg.vol_rel_threshold),
        ("transport_jacobian_limit", col["jac_tau_dev"], cfg.jac_threshold),
        ("gradient_transport_limit", col["cn_norm"], cfg.cn_threshold),
    ):
        first, last = _thirds(v)
        A.append(_assert(name, v[-1] < thr and last <= first, v[-1], thr))
    half = col["jac_tau_dev"][len(ks) // 2 :]
    A.append(_assert("transport_jacobian_monotone", np.all(np.diff(half) <= 1e-9), np.max(np.diff(half)) if len(half) > 1 else 0.0, 1e-9))
    # the bound needs U_r(limit) inside the members' reach: sup_b <= (r0 - r) / 2
    eligible = col["sup_b"] <= 0.5 * (seq.r0 - r)
    hmax = col["hess_sup"][eligible].max(initial=0.0)
    A.append(_assert("hessian_uniform_bound", eligible.any() and hmax <= report.hess_bound, hmax, report.hess_bound))
    inc = col["inclusion_excess"][~np.isnan(col["inclusion_excess"])]
    A.append(_assert("tube_inclusions", len(inc) > 0 and np.all(inc <= 0), inc.max() if len(inc) else 0.0, 0.0))
    j1 = IntegrandSpec.from_name(cfg.f1)
    if j1.convex_in_H:
        gap = col["F1_n"].min() - L.F1
        A.append(_assert("lsc_F1", gap >= -cfg.tol_lsc, gap, -cfg.tol_lsc))
    if cfg.track_f2:
        gap2 = col["F2_n"].min() - L.F2
        A.append(_assert("lsc_F2", gap2 >= -cfg.tol_lsc_f2, gap2, -cfg.tol_lsc_f2))
    if raise_on_failure:
        for a in A:
            if not a["passed"]:
                raise LemmaViolation(a["lemma"], f"value {a['value']:.6g} vs threshold {a['threshold']:.6g}")
    return report
