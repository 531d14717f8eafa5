import json

import numpy as np
import pytest

from tubecalc.convergence import (
    LabConfig,
    ShapeSequence,
    cn_matrix,
    gradient_transport_defect,
    inside_components,
    rconv_metrics,
    run_sequence_experiment,
    transport_jacobian,
    transport_jacobians,
)
from tubecalc.errors import InvalidInput, LemmaViolation, ProjectionNotInjective
from tubecalc.functionals import QuadParams
from tubecalc.geometry import ShapeSpec
from tubecalc.sampling import boundary_points

FAST = LabConfig(quad=QuadParams(0.1, 0.04), volume_spacing=0.04, n_box_samples=20_000,
                 n_boundary_samples=400, track_f2=False)


@pytest.fixture(scope="module")
def surf(sphere):
    return boundary_points(sphere, 300, seed=2)[0]


@pytest.fixture(scope="module")
def ramp_report():
    return run_sequence_experiment(ShapeSequence.build("radius_ramp", 4), FAST)


def test_family_construction():
    seq = ShapeSequence.build("ellipsoid_to_sphere")
    assert [m.params[0] for m in seq.members] == [1 + 2.0**-n for n in range(1, 7)]
    assert seq.indices == list(range(1, 7))
    assert all(c.passed for c in seq.certify(n_samples=512))
    with pytest.raises(InvalidInput):
        ShapeSequence.build("spiral")


@pytest.mark.parametrize("family", ["harmonic_decay", "radius_ramp"])
def test_families_certified(family):
    seq = ShapeSequence.build(family, 4)
    assert all(c.passed for c in seq.certify(n_samples=512))


def test_identity_member(sphere, surf):
    assert np.allclose(transport_jacobians(sphere, sphere, surf), 1.0, atol=1e-8)
    assert np.allclose(cn_matrix(sphere, sphere, surf[0]), 0.0, atol=1e-14)


def test_concentric_jacobian(sphere, surf):
    member = ShapeSpec.ball(1.2)
    assert np.allclose(transport_jacobians(sphere, member, surf), 1.44, atol=1e-7)


def test_jacobian_monotone_in_eccentricity(sphere, surf):
    dev = [np.max(np.abs(transport_jacobians(sphere, ShapeSpec.ellipsoid(a, 1, 1), surf) - 1)) for a in (1.1, 1.2)]
    assert dev[0] < dev[1]


def test_cn_concentric_baseline(sphere, surf):
    # b_n = -delta, grad b_n = grad b_inf = x, Hess b_n(x) = I - x x^T on |x| = 1: C = delta (I - x x^T)
    delta = 0.1
    member = ShapeSpec.ball(1 + delta)
    for x in surf[:20]:
        C = cn_matrix(sphere, member, x)
        assert np.allclose(C, delta * (np.eye(3) - np.outer(x, x)), atol=1e-12)
        assert np.linalg.norm(C, 2) == pytest.approx(delta)


@pytest.mark.parametrize("member", [ShapeSpec.ellipsoid(1.2, 1.0, 0.9), ShapeSpec.ball(1.1),
                                    ShapeSpec.harmonic_sphere(1.0, [0, 0, 0, 0, 0, 0.05, 0, 0.02])],
                         ids=["ellipsoid", "ball", "harmonic"])
def test_gradient_transport_identity(sphere, surf, member):
    assert np.max(gradient_transport_defect(sphere, member, surf)) < 1e-3


def test_projection_not_injective(sphere):
    with pytest.raises(ProjectionNotInjective):
        transport_jacobian(sphere, ShapeSpec.ellipsoid(3.0, 1.0, 1.0), [1.0, 0.0, 0.0])


def test_constant_sequence_has_zero_gaps():
    rep = run_sequence_experiment(ShapeSequence.build("constant", 3), FAST)
    for key in ("sup_b", "sup_gradb", "perim_gap", "vol_gap"):
        assert np.all(getattr(rep, key) == 0.0), key
    assert np.all(rep.cn_norm < 1e-12)  # roundoff of b = O(eps) on the surface
    assert np.all(rep.jac_tau_dev < 1e-8)
    lsc = next(a for a in rep.assertions if a["lemma"] == "lsc_F1")
    assert lsc["value"] == 0.0 and lsc["passed"]


def test_concentric_sup_b_exact(ramp_report):
    assert np.allclose(ramp_report.sup_b, [2.0**-n for n in ramp_report.indices], rtol=0, atol=1e-14)
    assert np.allclose(ramp_report.sup_gradb, 0.0, atol=1e-14)


def test_ramp_perimeter_gap(ramp_report):
    exact = np.array([4 * np.pi * ((1 + 2.0**-n) ** 2 - 1) for n in ramp_report.indices])
    radii = np.array([1 + 2.0**-n for n in ramp_report.indices])
    assert np.all(np.abs(ramp_report.perim_gap - exact) < 0.01 * 4 * np.pi * radii**2)


def test_ramp_invariants(ramp_report):
    by_name = {a["lemma"]: a for a in ramp_report.assertions}
    for name in ("transport_jacobian_monotone", "hessian_uniform_bound", "tube_inclusions", "lsc_F1"):
        assert by_name[name]["passed"], by_name[name]
    assert np.all(ramp_report.components == 1)


def test_ellipsoid_sup_b_hausdorff_bound():
    seq = ShapeSequence.build("ellipsoid_to_sphere", 3)
    from tubecalc.convergence import _limit_data

    L = _limit_data(seq, FAST)
    for k, n in enumerate(seq.indices):
        row = rconv_metrics(seq, k, FAST, L)
        assert row["sup_b"] <= 2.0**-n + 1e-12


def test_f2_lsc_tracked():
    cfg = LabConfig(quad=QuadParams(0.1, 0.04), volume_spacing=0.04, n_box_samples=10_000,
                    n_boundary_samples=200, track_f2=True)
    rep = run_sequence_experiment(ShapeSequence.build("radius_ramp", 3), cfg)
    lsc = next(a for a in rep.assertions if a["lemma"] == "lsc_F2")
    assert lsc["passed"]
    assert np.all(np.isfinite(rep.F2_n))


def test_failure_raises_named_lemma():
    seq = ShapeSequence.build("radius_ramp", 2)
    with pytest.raises(LemmaViolation) as info:
        run_sequence_experiment(seq, FAST, raise_on_failure=True)
    assert info.value.lemma in {"perimeter_continuity", "volume_continuity", "transport_jacobian_limit",
                                "gradient_transport_limit"}


def test_report_exports(ramp_report, tmp_path):
    ramp_report.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert len(lines) == len(ramp_report.indices) + 1
    summary = json.loads(ramp_report.to_json())
    assert summary["note"] and "hessian_bound" in summary
    assert {"lemma", "passed", "value", "threshold"} <= set(summary["assertions"][0])


def test_parallel_matches_serial():
    seq = ShapeSequence.build("radius_ramp", 3)
    serial = run_sequence_experiment(seq, FAST).to_json()
    cfg = LabConfig(**{**FAST.__dict__, "workers": 3})
    assert run_sequence_experiment(seq, cfg).to_json() == serial


def test_components_proxy():
    assert inside_components(ShapeSpec.ball(1.0)) == 1
    assert inside_components(ShapeSpec.union_of_balls([(0.5, (-1, 0, 0)), (0.5, (1, 0, 0))])) == 2
