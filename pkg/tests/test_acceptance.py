"""Acceptance gate: each criterion at its stated tolerance, one summary line per criterion."""

import json
import time

import numpy as np
import pytest

from conftest import random_shell_points, record_criterion, torus_points
from tubecalc.cli import main
from tubecalc.domain_pde import J3, eval_F3, solve_poisson_dirichlet, trace_defect
from tubecalc.functionals import IntegrandSpec, QuadParams, eval_F1
from tubecalc.geometry import ShapeSpec, evaluate, project_to_surface
from tubecalc.reach import estimate_reach, uniform_ball_check
from tubecalc.surface_pde import LaplaceBeltrami, rayleigh_poincare, solve_lb, source
from tubecalc.tube import build_tube, hessian_at_footpoint, surface_integral

FOUR_PI = 4 * np.pi


def check(key, passed, detail):
    record_criterion(key, passed, detail)
    assert passed, detail


# -- 1 ------------------------------------------------------------------


def test_criterion_1_sphere_area():
    sphere = ShapeSpec.ball(1.0)
    t0 = time.perf_counter()
    area = surface_integral(build_tube(sphere, 0.1, 0.02), 1.0)
    elapsed = time.perf_counter() - t0
    vals = [surface_integral(build_tube(sphere, h, 0.02), 1.0) for h in (0.05, 0.1, 0.2)]
    spread = max(abs(a - b) / FOUR_PI for a in vals for b in vals)
    rel = abs(area - FOUR_PI) / FOUR_PI
    ok = rel < 0.02 and elapsed < 30 and spread < 0.01
    check("1", ok, f"area rel err {rel:.2e} (<2e-2), {elapsed:.1f}s (<30s), h-spread {spread:.2e} (<1e-2)")


# -- 2 ------------------------------------------------------------------


def test_criterion_2_curvature_functionals():
    w = eval_F1(ShapeSpec.ball(1.0), IntegrandSpec.from_name("willmore"), QuadParams(0.1, 0.02))
    m = eval_F1(ShapeSpec.ball(2.0), IntegrandSpec.from_name("mean-curvature"), QuadParams(0.2, 0.04))
    rw, rm = abs(w / (16 * np.pi) - 1), abs(m / (16 * np.pi) - 1)
    check("2", rw < 0.03 and rm < 0.03, f"willmore rel err {rw:.2e}, mean-curvature(r=2) rel err {rm:.2e} (<3e-2)")


# -- 3 ------------------------------------------------------------------


def test_criterion_3_reach():
    rs = estimate_reach(ShapeSpec.ball(1.0))
    rt = estimate_reach(ShapeSpec.torus(2.0, 0.5))
    ladder = [0.2, 0.35, 0.5, 0.65, 0.8]
    passed = [uniform_ball_check(ShapeSpec.torus(2.0, 0.5), h).passed for h in ladder]
    k = passed.index(False) if False in passed else len(passed)
    monotone = all(passed[:k]) and not any(passed[k:])
    ok = abs(rs - 1.0) <= 0.02 and abs(rt - 0.5) <= 0.02 and monotone
    check("3", ok, f"sphere {rs:.4f}, torus {rt:.4f} (+-0.02), ladder {passed} monotone={monotone}")


# -- 4 ------------------------------------------------------------------


def test_criterion_4_laplace_beltrami():
    sphere = ShapeSpec.ball(1.0)
    op = LaplaceBeltrami(build_tube(sphere, 0.15, 0.05), 1.0)
    field, _ = solve_lb(sphere, source("z"), operator=op)
    q = field.quad
    v, exact = field.at_footpoints(), -q.x[:, 2] / 2
    err = np.sqrt(surface_integral(q, (v - exact) ** 2) / surface_integral(q, exact**2))
    rhs = op.rhs(source("z"))
    e0 = op.energy(field.values, rhs)
    rng = np.random.default_rng(4)
    increases = 0
    for _ in range(10):
        w = op.shift_to_zero_mean(rng.standard_normal(op.mesh.n_nodes))
        w /= np.linalg.norm(w)
        increases += op.energy(field.values + 1e-3 * w, rhs) > e0
    check("4", err < 0.1 and increases == 10, f"L2 rel err {err:.3e} (<0.1), energy increased {increases}/10")


# -- 5 ------------------------------------------------------------------


def test_criterion_5_poincare():
    lam = rayleigh_poincare(ShapeSpec.ball(1.0), QuadParams(0.15, 0.05))
    rel = abs(lam - 2.0) / 2.0
    check("5", rel < 0.15, f"constant {lam:.4f} vs 2 (rel err {rel:.3e} < 0.15)")


# -- 6 ------------------------------------------------------------------


def test_criterion_6_poisson():
    sphere = ShapeSpec.ball(1.0)
    errs = []
    for s in (0.08, 0.04, 0.02):
        f = solve_poisson_dirichlet(sphere, 1.0, 0.0, spacing=s)
        pts = f.points[f.inside]
        errs.append(np.max(np.abs(f.values[f.inside] - (np.sum(pts**2, axis=1) - 1) / 6)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    F3 = eval_F3(sphere, J3["dnu-sq"], 1.0, 0.0, spacing=0.02)
    rel = abs(F3 / (4 * np.pi / 9) - 1)
    ok = errs[-1] < 1e-2 and np.all(orders >= 1.8) and rel < 0.05
    check("6", ok, f"max err {errs[-1]:.2e} (<1e-2), orders {np.round(orders, 3).tolist()} (>=1.8), "
                   f"F3 rel err {rel:.2e} (<5e-2)")


# -- 7 and 9 share the default converge runs ------------------------------


@pytest.fixture(scope="module")
def converge_runs(tmp_path_factory):
    d = tmp_path_factory.mktemp("converge")
    args = ["converge", "--family", "ellipsoid_to_sphere"]
    status = [main(args + ["--out", str(d / f"run{i}.json")]) for i in range(2)]
    texts = [(d / f"run{i}.json").read_bytes() for i in range(2)]
    return status, texts, json.loads(texts[0])


def _rows(report):
    return report["results"]["per_member"]


def test_criterion_7a_perimeter_gap(converge_runs):
    gap = _rows(converge_runs[2])[-1]["perim_gap"]
    check("7.a", abs(gap) < 1e-2 * FOUR_PI, f"final |perimeter gap| {abs(gap):.4f} (< {1e-2 * FOUR_PI:.4f})")


def test_criterion_7b_volume_gap(converge_runs):
    gap = _rows(converge_runs[2])[-1]["vol_gap"]
    thr = 1e-2 * FOUR_PI / 3
    check("7.b", abs(gap) < thr, f"final |volume gap| {abs(gap):.4f} (< {thr:.4f})")


def test_criterion_7c_transport_jacobian(converge_runs):
    v = np.array([r["jac_tau_dev"] for r in _rows(converge_runs[2])])
    k = len(v) // 3
    decreasing = np.median(v[-k:]) < np.median(v[:k])
    check("7.c", v[-1] < 0.02 and decreasing, f"final sup|Jac-1| {v[-1]:.4f} (<0.02), thirds decreasing={decreasing}")


def test_criterion_7d_cn_norm(converge_runs):
    v = _rows(converge_runs[2])[-1]["cn_norm"]
    check("7.d", v < 0.05, f"final sup||C_n|| {v:.4f} (<0.05)")


def test_criterion_7e_willmore_lsc(converge_runs):
    F1 = np.array([r["F1_n"] for r in _rows(converge_runs[2])])
    thr = 16 * np.pi - 0.5
    check("7.e", np.all(F1 >= thr), f"min F1 {F1.min():.4f} (>= {thr:.4f})")


def test_criterion_9_determinism(converge_runs):
    status, texts, _ = converge_runs
    same = texts[0] == texts[1]
    check("9", same and status[0] == status[1], f"bitwise identical reports: {same}, exit codes {status}")


# -- 8 ------------------------------------------------------------------


CLOSED_FORM = [ShapeSpec.ball(1.0), ShapeSpec.torus(2.0, 0.5), ShapeSpec.capsule(1.0, 0.5)]


def test_criterion_8a_eikonal():
    rng = np.random.default_rng(8)
    worst = 0.0
    for shape, X in ((CLOSED_FORM[0], random_shell_points(rng, 1_000_000, 0.5, 1.5)),
                     (CLOSED_FORM[1], torus_points(rng, 1_000_000, spread=0.25))):
        g = evaluate(shape, X, hessian=False).grad
        worst = max(worst, np.max(np.abs(np.linalg.norm(g, axis=1) - 1)))
    check("8.a", worst < 1e-6, f"eikonal max ||grad b| - 1| {worst:.2e} over 2x10^6 points (<1e-6)")


def test_criterion_8b_hessian_normal_kernel():
    worst = 0.0
    for shape in CLOSED_FORM:
        q = build_tube(shape, 0.2, 0.04)
        f = evaluate(shape, q.y)
        worst = max(worst, np.max(np.linalg.norm(np.einsum("nij,nj->ni", f.hess, f.grad), axis=1)))
    check("8.b", worst < 1e-4, f"max ||Hess b grad b|| {worst:.2e} (<1e-4)")


def test_criterion_8c_projection_idempotence():
    worst = 0.0
    for shape in CLOSED_FORM + [ShapeSpec.ellipsoid(1.5, 1.0, 0.8)]:
        q = build_tube(shape, 0.1, 0.04)
        again = project_to_surface(shape, q.x)
        worst = max(worst, np.max(np.linalg.norm(again - q.x, axis=1)) / shape.tol_surface)
    check("8.c", worst < 1.0, f"max ||p(p(x)) - p(x)|| / tol_surface {worst:.2e} (<1)")


def test_criterion_8d_hessian_transport():
    worst = 0.0
    for shape in CLOSED_FORM:
        q = build_tube(shape, 0.2, 0.04)
        worst = max(worst, np.max(np.abs(hessian_at_footpoint(shape, q.y) - evaluate(shape, q.x).hess)))
    check("8.d", worst < 1e-6, f"max |transported - direct Hessian| {worst:.2e} (<1e-6)")


def test_criterion_8e_trace_scaling():
    sphere = ShapeSpec.ball(1.0)
    u = lambda y: y[:, 2]  # noqa: E731
    ratio = trace_defect(build_tube(sphere, 0.2, 0.02), u) / trace_defect(build_tube(sphere, 0.1, 0.02), u)
    check("8.e", abs(ratio / 2 - 1) < 0.2, f"defect ratio h -> h/2: {ratio:.4f} (2 within 20%)")
