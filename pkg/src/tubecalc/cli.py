"""Command-line front end: ``tubecalc <command> [options]``.

Every run prints a JSON report ``{"command", "config", "results", "assertions", "error"?}``
and writes it to ``--out`` when given.  Exit status: 0 success, 2 when an
asserted lemma fails, 1 on input or convergence errors.

Mean curvature ``H`` is the undivided trace of the shape operator (``2/r``
on a sphere in 3-D).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np

from .convergence import LabConfig, ShapeSequence, run_sequence_experiment
from .domain_pde import J3, boundary_trace, solve_poisson_dirichlet
from .errors import InvalidInput, LemmaViolation, NoConvergence, TubecalcError
from .functionals import CLI_NAMES, IntegrandSpec, QuadParams, eval_F1_on
from .geometry import ShapeSpec
from .reach import estimate_reach, uniform_ball_check
from .surface_pde import J2, SOURCES, solve_lb, source
from .tube import build_tube, surface_integral

COMMANDS = ("reach", "functional", "solve-lb", "solve-poisson", "converge")

# per-command defaults for the tube parameters
DEFAULT_QUAD = {
    "functional": (0.1, 0.02),
    "solve-lb": (0.15, 0.05),
    "solve-poisson": (0.1, 0.04),
    "converge": (0.1, 0.02),
}


@dataclass
class RunConfig:
    command: str
    shape: str = None
    h: float = None
    spacing: float = None
    integrand: str = "willmore"
    j2: str = "grad-sq"
    j3: str = "dnu-sq"
    source: str = "z"
    h_src: str = "1"
    g: str = "0"
    eps_normal: float = 1.0
    family: str = "ellipsoid_to_sphere"
    n_members: int = 6
    track_f2: bool = True
    tol_lsc: float = 0.5
    tol_lsc_f2: float = 0.05
    n_samples: int = None
    out: str = None
    csv: str = None
    threads: int = 1
    seed: int = 0

    def validate(self):
        if self.command not in COMMANDS:
            raise InvalidInput(f"unknown command {self.command!r}")
        if self.command != "converge" and not self.shape:
            raise InvalidInput(f"{self.command} requires --shape")
        if self.shape and not os.path.isfile(self.shape):
            raise InvalidInput(f"shape file {self.shape!r} does not exist")
        for name in ("h", "spacing", "eps_normal", "tol_lsc", "tol_lsc_f2"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise InvalidInput(f"{name} must be positive")
        for name in ("threads", "n_members", "n_samples"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise InvalidInput(f"{name} must be at least 1")
        if self.command in DEFAULT_QUAD:
            h0, s0 = DEFAULT_QUAD[self.command]
            self.h = h0 if self.h is None else self.h
            self.spacing = s0 if self.spacing is None else self.spacing


# execution-only settings kept out of the embedded config so reports stay
# bitwise identical across thread counts and output locations
EXECUTION_FIELDS = ("out", "threads")


def provenance(cfg: RunConfig) -> dict:
    return {k: v for k, v in asdict(cfg).items() if k not in EXECUTION_FIELDS}


class ParseError(TubecalcError):
    pass


def _scalar_field(text: str):
    """A named field from the source table or a constant."""
    if text in SOURCES:
        return SOURCES[text]
    try:
        return float(text)
    except ValueError:
        raise InvalidInput(f"field {text!r} is neither a number nor one of {sorted(SOURCES)}") from None


def load_shape(path: str) -> ShapeSpec:
    try:
        with open(path) as fh:
            return ShapeSpec.from_json(fh.read())
    except (json.JSONDecodeError, InvalidInput, TypeError, ValueError) as exc:
        raise ParseError(f"cannot parse shape file {path!r}: {exc}") from exc


def _run_reach(cfg, shape):
    if cfg.h is None:
        r = estimate_reach(shape, n_samples=cfg.n_samples, seed=cfg.seed)
        return {"reach": r}, []
    cert = uniform_ball_check(shape, cfg.h, cfg.n_samples, cfg.seed)
    return cert.to_dict(), []


def _run_functional(cfg, shape):
    j = IntegrandSpec.from_name(cfg.integrand)
    if cfg.integrand not in CLI_NAMES:
        raise InvalidInput(f"integrand must be one of {sorted(CLI_NAMES)}")
    tube = build_tube(shape, cfg.h, cfg.spacing)
    value = eval_F1_on(tube, j)
    if cfg.csv:
        tube.to_csv(cfg.csv)
    return {"integrand": cfg.integrand, "value": value, "n_nodes": len(tube)}, []


def _run_solve_lb(cfg, shape):
    tube = build_tube(shape, cfg.h, cfg.spacing)
    f = source(cfg.source)
    field, report = solve_lb(shape, f, eps_normal=cfg.eps_normal, tube=tube)
    if cfg.j2 not in J2:
        raise InvalidInput(f"j2 must be one of {sorted(J2)}")
    q = field.quad
    F2 = surface_integral(q, J2[cfg.j2](q.x, q.nu, field.at_footpoints(), field.surface_gradient()))
    if cfg.csv:
        field.to_csv(cfg.csv)
    res = {"source": cfg.source, "energy": report.to_dict(), "F2": F2, "surface_mean": field.surface_mean(),
           "n_nodes": field.mesh.n_nodes}
    return res, []


def _run_solve_poisson(cfg, shape):
    if cfg.j3 not in J3:
        raise InvalidInput(f"j3 must be one of {sorted(J3)}")
    field = solve_poisson_dirichlet(shape, _scalar_field(cfg.h_src), _scalar_field(cfg.g), cfg.spacing)
    tube = build_tube(shape, cfg.h, min(cfg.spacing, cfg.h / 3))
    tr = boundary_trace(field, tube)
    F3 = surface_integral(tube, J3[cfg.j3](tr.x, tr.nu, tr.u, tr.grad))
    if cfg.csv:
        tr.to_csv(cfg.csv)
    vals = field.values[field.inside]
    res = {"F3": F3, "cg_iters": field.cg_iters, "residual": field.residual, "n_interior": int(field.inside.sum()),
           "u_min": float(vals.min()), "u_max": float(vals.max())}
    return res, []


def _run_converge(cfg, shape):
    seq = ShapeSequence.build(cfg.family, cfg.n_members)
    lab = LabConfig(
        quad=QuadParams(cfg.h, cfg.spacing),
        track_f2=cfg.track_f2,
        tol_lsc=cfg.tol_lsc,
        tol_lsc_f2=cfg.tol_lsc_f2,
        seed=cfg.seed,
        workers=cfg.threads,
    )
    report = run_sequence_experiment(seq, lab)
    if cfg.csv:
        report.to_csv(cfg.csv)
    summary = report.summary()
    assertions = summary.pop("assertions")
    return summary, assertions


RUNNERS = {
    "reach": _run_reach,
    "functional": _run_functional,
    "solve-lb": _run_solve_lb,
    "solve-poisson": _run_solve_poisson,
    "converge": _run_converge,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return None if not np.isfinite(v) else v
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _error_code(exc) -> str:
    if isinstance(exc, ParseError):
        return "parse"
    if isinstance(exc, InvalidInput):
        return "invalid-input"
    if isinstance(exc, NoConvergence):
        return "no-convergence"
    name = type(exc).__name__
    return "".join("-" + c.lower() if c.isupper() else c for c in name).lstrip("-")


def run(cfg: RunConfig):
    """Execute one pipeline; returns ``(exit_status, report_dict)``."""
    report = {"command": cfg.command, "config": provenance(cfg), "results": {}, "assertions": []}
    status = 0
    try:
        cfg.validate()
        report["config"] = provenance(cfg)
        shape = load_shape(cfg.shape) if cfg.shape else None
        results, assertions = RUNNERS[cfg.command](cfg, shape)
        report["results"] = results
        report["assertions"] = assertions
        if any(not a["passed"] for a in assertions):
            status = 2
    except LemmaViolation as exc:
        report["error"] = "lemma-violation"
        report["message"] = str(exc)
        report["assertions"].append({"lemma": exc.lemma, "passed": False, "value": None, "threshold": None})
        status = 2
    except TubecalcError as exc:
        report["error"] = _error_code(exc)
        report["message"] = str(exc)
        status = 1
    report = _jsonable(report)
    text = json.dumps(report, indent=2, sort_keys=True)
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text + "\n")
    return status, report, text


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tubecalc", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--shape", help="shape JSON file {kind, params, center, dim}")
    p.add_argument("--config", help="JSON file with RunConfig fields; flags take precedence")
    p.add_argument("--h", type=float, help="tube half-width (reach: ball radius to certify)")
    p.add_argument("--spacing", type=float, help="grid spacing")
    p.add_argument("--integrand", help=f"F1 integrand: {', '.join(CLI_NAMES)}")
    p.add_argument("--j2", help=f"F2 integrand: {', '.join(J2)}")
    p.add_argument("--j3", help=f"F3 integrand: {', '.join(J3)}")
    p.add_argument("--source", help=f"Laplace-Beltrami source: {', '.join(SOURCES)}")
    p.add_argument("--h-src", dest="h_src", help="Poisson source: number or source name")
    p.add_argument("--g", help="Dirichlet data: number or source name")
    p.add_argument("--eps-normal", dest="eps_normal", type=float)
    p.add_argument("--family", help="converge: ellipsoid_to_sphere, harmonic_decay, radius_ramp, constant")
    p.add_argument("--n-members", dest="n_members", type=int)
    p.add_argument("--no-f2", dest="track_f2", action="store_const", const=False)
    p.add_argument("--tol-lsc", dest="tol_lsc", type=float)
    p.add_argument("--tol-lsc-f2", dest="tol_lsc_f2", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--csv", help="write per-node or per-member detail here")
    p.add_argument("--threads", type=int, help="worker threads (fallback: TUBECALC_THREADS)")
    p.add_argument("--seed", type=int, help="low-discrepancy seed (default 0)")
    return p


def resolve_config(argv=None) -> RunConfig:
    """Flags override the config file, which overrides defaults."""
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read config {args.config!r}: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise ParseError(f"unknown config keys {sorted(unknown)}")
    if "threads" not in values and os.environ.get("TUBECALC_THREADS"):
        values["threads"] = int(os.environ["TUBECALC_THREADS"])
    for k, v in vars(args).items():
        if k != "config" and v is not None:
            values[k] = v
    values["command"] = args.command
    return RunConfig(**values)


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except (ParseError, ValueError) as exc:
        report = {"command": None, "config": None, "results": {}, "assertions": [], "error": "parse", "message": str(exc)}
        print(json.dumps(report, indent=2, sort_keys=True))
        return 1
    status, _, text = run(cfg)
    print(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
