"""Signed distance functions, gradients and Hessians for a catalogue of shapes.

Convention: ``b < 0`` inside, so ``grad b`` is the outward unit normal on the
boundary.  Every evaluator is vectorised over a ``(N, d)`` array of points;
the single-point helpers (:func:`eval_sdf`, :func:`project_to_surface`) wrap
the batched core.

Ball, torus, capsule and disjoint unions of balls have closed forms.  The
ellipsoid and the harmonic sphere are found by projecting onto an implicit
surface ``phi = 0``; their Hessians use the exact transport formula
``hess b(y) = L (I + t L)^{-1}`` with ``L = P hess(phi) P / |grad phi|`` the
shape operator at the footpoint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import harmonics
from .errors import (
    GridTooLarge,
    InvalidInput,
    MedialAxisProximity,
    NonConvergedProjection,
)

KINDS = ("ball", "ellipsoid", "torus", "capsule", "union_of_balls", "harmonic_sphere")

NEWTON_MAX_ITER = 50
CHUNK = 200_000
DEFAULT_MAX_NODES = 8_000_000


@dataclass(frozen=True)
class AmbientBox:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise InvalidInput(f"box needs lo < hi componentwise, got {lo} / {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def padded(self, pad: float) -> "AmbientBox":
        return AmbientBox(tuple(v - pad for v in self.lo), tuple(v + pad for v in self.hi))

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= np.array(self.lo)) & (x <= np.array(self.hi)), axis=-1)


@dataclass(frozen=True)
class ShapeSpec:
    """Declarative description of an admissible closed set.

    ``params`` per kind (all lengths in absolute units):

    - ball: ``[r]``
    - ellipsoid: semi-axes ``[a, b(, c)]``, aligned with the coordinate axes
    - torus (3-D only): ``[R, r]``, axis along z
    - capsule: ``[L, r]``, segment of length L along the last axis
    - union_of_balls: ``[r1, *c1, r2, *c2, ...]``, centres relative to ``center``
    - harmonic_sphere: ``[R, c1, c2, ...]`` with radius
      ``R * (1 + sum_k c_k Y_k(u))`` in direction ``u`` (see :mod:`tubecalc.harmonics`)
    """

    kind: str
    params: tuple
    center: tuple = None
    dim: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown shape kind {self.kind!r}")
        if self.dim not in (2, 3):
            raise InvalidInput("dim must be 2 or 3")
        params = tuple(float(p) for p in np.atleast_1d(self.params))
        center = (0.0,) * self.dim if self.center is None else tuple(float(c) for c in self.center)
        if len(center) != self.dim:
            raise InvalidInput("center has the wrong dimension")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "center", center)
        self._validate()

    def _validate(self):
        p, d = self.params, self.dim
        if not all(np.isfinite(p)):
            raise InvalidInput("non-finite shape parameter")
        if self.kind == "ball":
            if len(p) != 1 or p[0] <= 0:
                raise InvalidInput("ball needs one positive radius")
        elif self.kind == "ellipsoid":
            if len(p) != d or min(p) <= 0:
                raise InvalidInput(f"ellipsoid needs {d} positive semi-axes")
        elif self.kind == "torus":
            if d != 3 or len(p) != 2 or not (0 < p[1] < p[0]):
                raise InvalidInput("torus needs dim=3 and params [R, r] with 0 < r < R")
        elif self.kind == "capsule":
            if len(p) != 2 or p[0] < 0 or p[1] <= 0:
                raise InvalidInput("capsule needs params [L >= 0, r > 0]")
        elif self.kind == "union_of_balls":
            if len(p) == 0 or len(p) % (d + 1):
                raise InvalidInput("union_of_balls needs groups of [r, *center]")
            radii, centres = self.balls
            if min(radii) <= 0:
                raise InvalidInput("ball radii must be positive")
            for i in range(len(radii)):
                for j in range(i + 1, len(radii)):
                    gap = np.linalg.norm(centres[i] - centres[j]) - radii[i] - radii[j]
                    if gap <= 0:
                        raise InvalidInput(
                            "overlapping or tangent balls: the union violates the reach precondition"
                        )
        elif self.kind == "harmonic_sphere":
            if len(p) < 1 or p[0] <= 0 or len(p) - 1 > harmonics.n_basis(d):
                raise InvalidInput(
                    f"harmonic_sphere needs [R > 0, up to {harmonics.n_basis(d)} coefficients]"
                )
            slope, lowest = self._harmonic_slope()
            if slope >= 1.0 or lowest <= 0.0:
                raise InvalidInput(
                    f"perturbation too large: max slope {slope:.3f} (must be < 1), min radius factor {lowest:.3f}"
                )

    def _harmonic_slope(self):
        u = harmonics.fibonacci_directions(20_000 if self.dim == 3 else 4096, self.dim)
        g, grad, _ = harmonics.perturbation(self.params[1:], u, derivatives=1)
        # grad of the degree-0 extension is tangential on the unit sphere
        slope = np.linalg.norm(grad, axis=1) / (1.0 + g)
        return float(slope.max()), float((1.0 + g).min())

    # --- construction helpers -------------------------------------------
    @classmethod
    def ball(cls, r=1.0, center=None, dim=3):
        return cls("ball", (r,), center, dim)

    @classmethod
    def ellipsoid(cls, *axes, center=None):
        return cls("ellipsoid", tuple(axes), center, len(axes))

    @classmethod
    def torus(cls, R=2.0, r=0.5, center=None):
        return cls("torus", (R, r), center, 3)

    @classmethod
    def capsule(cls, length, r, center=None, dim=3):
        return cls("capsule", (length, r), center, dim)

    @classmethod
    def union_of_balls(cls, balls, center=None, dim=3):
        flat = []
        for r, c in balls:
            flat.append(r)
            flat.extend(c)
        return cls("union_of_balls", tuple(flat), center, dim)

    @classmethod
    def harmonic_sphere(cls, R, coefs, center=None, dim=3):
        return cls("harmonic_sphere", (R, *coefs), center, dim)

    @classmethod
    def from_dict(cls, data: dict) -> "ShapeSpec":
        try:
            kind = data["kind"]
            params = data["params"]
        except (KeyError, TypeError) as exc:
            raise InvalidInput(f"shape JSON missing field: {exc}") from exc
        dim = int(data.get("dim", 3))
        return cls(kind, tuple(params), data.get("center"), dim)

    @classmethod
    def from_json(cls, text: str) -> "ShapeSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "center": list(self.center), "dim": self.dim}

    def scaled(self, lam: float) -> "ShapeSpec":
        """Homothety of ratio ``lam`` about ``center``."""
        p = np.array(self.params)
        if self.kind == "union_of_balls":
            p = p * lam
        elif self.kind == "harmonic_sphere":
            p[0] *= lam
        else:
            p = p * lam
        return ShapeSpec(self.kind, tuple(p), self.center, self.dim)

    # --- derived geometry -----------------------------------------------
    @property
    def balls(self):
        k = self.dim + 1
        arr = np.array(self.params).reshape(-1, k)
        return arr[:, 0], arr[:, 1:]

    @cached_property
    def half_extent(self) -> np.ndarray:
        """Half-widths of an axis-aligned box around ``center`` containing the shape."""
        p, d = self.params, self.dim
        if self.kind == "ball":
            return np.full(d, p[0])
        if self.kind == "ellipsoid":
            return np.array(p)
        if self.kind == "torus":
            return np.array([p[0] + p[1], p[0] + p[1], p[1]])
        if self.kind == "capsule":
            ext = np.full(d, p[1])
            ext[-1] += p[0] / 2
            return ext
        if self.kind == "union_of_balls":
            radii, centres = self.balls
            return np.max(np.abs(centres) + radii[:, None], axis=0)
        u = harmonics.fibonacci_directions(20_000 if d == 3 else 4096, d)
        g, _, _ = harmonics.perturbation(p[1:], u, derivatives=0)
        return np.full(d, p[0] * (1.0 + g.max()) * 1.02)

    @property
    def diameter(self) -> float:
        return float(2.0 * np.linalg.norm(self.half_extent)) if self.kind == "union_of_balls" else float(
            2.0 * self.half_extent.max()
        )

    @property
    def tol_surface(self) -> float:
        return 1e-10 * self.diameter

    def bounding_box(self, pad: float = 0.0) -> AmbientBox:
        c = np.array(self.center)
        e = self.half_extent + pad
        return AmbientBox(tuple(c - e), tuple(c + e))


@dataclass
class SdfSample:
    b: float
    grad: np.ndarray
    hess: np.ndarray
    footpoint_valid: bool = True


@dataclass
class SdfField:
    """Batched evaluation result; arrays are aligned with the query points."""

    b: np.ndarray
    grad: np.ndarray
    foot: np.ndarray
    hess: np.ndarray = None
    medial: np.ndarray = None
    converged: np.ndarray = None

    def __post_init__(self):
        n = len(self.b)
        if self.medial is None:
            self.medial = np.zeros(n, dtype=bool)
        if self.converged is None:
            self.converged = np.ones(n, dtype=bool)

    @property
    def valid(self) -> np.ndarray:
        return self.converged & ~self.medial

    def take(self, idx) -> "SdfField":
        return SdfField(
            self.b[idx],
            self.grad[idx],
            self.foot[idx],
            None if self.hess is None else self.hess[idx],
            self.medial[idx],
            self.converged[idx],
        )

    @staticmethod
    def concat(parts) -> "SdfField":
        hess = None if parts[0].hess is None else np.concatenate([p.hess for p in parts])
        return SdfField(
            np.concatenate([p.b for p in parts]),
            np.concatenate([p.grad for p in parts]),
            np.concatenate([p.foot for p in parts]),
            hess,
            np.concatenate([p.medial for p in parts]),
            np.concatenate([p.converged for p in parts]),
        )


# ---------------------------------------------------------------------------
# closed forms (q = x - center)
# ---------------------------------------------------------------------------

def _outer(a, b):
    return a[:, :, None] * b[:, None, :]


def _ball(shape, q, hessian):
    r = shape.params[0]
    rho = np.linalg.norm(q, axis=1)
    medial = rho <= shape.tol_surface
    safe = np.where(medial, 1.0, rho)
    n = q / safe[:, None]
    n[medial] = np.eye(shape.dim)[-1]
    b = rho - r
    hess = None
    if hessian:
        hess = (np.eye(shape.dim) - _outer(n, n)) / safe[:, None, None]
    return b, n, hess, medial


def _torus(shape, q, hessian):
    R, r = shape.params
    rho = np.hypot(q[:, 0], q[:, 1])
    on_axis = rho <= shape.tol_surface
    rho_s = np.where(on_axis, 1.0, rho)
    e_rho = np.stack([q[:, 0] / rho_s, q[:, 1] / rho_s, np.zeros(len(q))], axis=1)
    e_rho[on_axis] = (1.0, 0.0, 0.0)
    w = q - R * e_rho
    s = np.linalg.norm(w, axis=1)
    on_core = s <= shape.tol_surface
    s_s = np.where(on_core, 1.0, s)
    n = w / s_s[:, None]
    n[on_core] = e_rho[on_core]
    hess = None
    if hessian:
        e_phi = np.stack([-e_rho[:, 1], e_rho[:, 0], np.zeros(len(q))], axis=1)
        hess = (np.eye(3) - _outer(n, n)) / s_s[:, None, None] - (R / (rho_s * s_s))[
            :, None, None
        ] * _outer(e_phi, e_phi)
    return s - r, n, hess, on_axis | on_core


def _capsule(shape, q, hessian):
    L, r = shape.params
    d = shape.dim
    axis = np.eye(d)[-1]
    s = np.clip(q[:, -1], -L / 2, L / 2)
    w = q - s[:, None] * axis
    dist = np.linalg.norm(w, axis=1)
    medial = dist <= shape.tol_surface
    dist_s = np.where(medial, 1.0, dist)
    n = w / dist_s[:, None]
    n[medial] = np.eye(d)[0]
    hess = None
    if hessian:
        hess = np.eye(d) - _outer(n, n)
        in_cyl = np.abs(q[:, -1]) < L / 2
        hess[in_cyl] -= np.outer(axis, axis)
        hess /= dist_s[:, None, None]
    return dist - r, n, hess, medial


def _union(shape, q, hessian):
    radii, centres = shape.balls
    rel = q[:, None, :] - centres[None, :, :]
    rho = np.linalg.norm(rel, axis=2)
    vals = rho - radii[None, :]
    k = np.argmin(vals, axis=1)
    idx = np.arange(len(q))
    b = vals[idx, k]
    rho_k = rho[idx, k]
    medial = rho_k <= shape.tol_surface
    if len(radii) > 1:
        part = np.partition(vals, 1, axis=1)
        medial |= (part[:, 1] - part[:, 0]) <= 10 * shape.tol_surface
    safe = np.where(rho_k <= shape.tol_surface, 1.0, rho_k)
    n = rel[idx, k] / safe[:, None]
    hess = None
    if hessian:
        hess = (np.eye(shape.dim) - _outer(n, n)) / safe[:, None, None]
    return b, n, hess, medial


# ---------------------------------------------------------------------------
# implicit shapes
# ---------------------------------------------------------------------------

def _transport_from_foot(L, t):
    """Hessian of b at offset t along the normal from a footpoint with shape operator L."""
    d = L.shape[-1]
    A = np.eye(d)[None] + t[:, None, None] * L
    with np.errstate(all="ignore"):
        try:
            return np.linalg.solve(A, L.transpose(0, 2, 1)).transpose(0, 2, 1)
        except np.linalg.LinAlgError:
            out = np.full_like(L, np.nan)
            for i in range(len(L)):
                try:
                    out[i] = L[i] @ np.linalg.inv(A[i])
                except np.linalg.LinAlgError:
                    pass
            return out


def _shape_operator(grad_phi, hess_phi):
    norm = np.linalg.norm(grad_phi, axis=1)
    n = grad_phi / norm[:, None]
    P = np.eye(grad_phi.shape[1])[None] - _outer(n, n)
    L = P @ hess_phi @ P / norm[:, None, None]
    return n, 0.5 * (L + L.transpose(0, 2, 1))


def _ellipsoid_foot(axes, y, tol):
    """Closest point on the axis-aligned ellipsoid with semi-axes ``axes``.

    Reduces the footpoint KKT system to the secular equation
    ``F(t) = sum (a_i y_i / (t + a_i^2))^2 - 1 = 0`` on ``t > -a_min^2`` and
    solves it by Newton's method; F is convex and decreasing there, so Newton
    started from the left endpoint of the bracket is monotone.
    Returns ``(foot, medial, converged)``.
    """
    a = np.asarray(axes, dtype=float)
    a2 = a * a
    sgn = np.where(y < 0, -1.0, 1.0)
    z = np.abs(y)
    amin2 = a2.min()
    grp = np.isclose(a2, amin2, rtol=1e-12, atol=0.0)
    scale = a.max()
    m = np.linalg.norm(z[:, grp], axis=1)
    # negligible minimal-axis components are zeroed so t = -a_min^2 stays a pole-free bracket end
    tiny = m <= 1e-14 * scale
    z[tiny[:, None] & grp[None, :]] = 0.0
    m[tiny] = 0.0
    ez = a * z

    # remaining secular sum at t = -a_min^2 for the degenerate (focal) case
    rest = np.zeros(len(y))
    if (~grp).any():
        rest = np.sum((ez[:, ~grp] / (a2[~grp] - amin2)) ** 2, axis=1)
    focal = tiny & (rest <= 1.0)

    t = np.full(len(y), -amin2)
    t_hi = -amin2 + np.linalg.norm(ez, axis=1) + 1e-300
    reg = ~focal
    # left endpoint: F >= 0 there
    t[reg] = -amin2 + np.minimum(a.min() * m[reg], t_hi[reg] + amin2)
    converged = np.ones(len(y), dtype=bool)
    active = reg.copy()
    for _ in range(200):
        if not active.any():
            break
        ta = t[active]
        den = ta[:, None] + a2[None, :]
        eza = ez[active]
        ratio = np.divide(eza, den, out=np.zeros_like(eza), where=eza != 0)
        F = np.sum(ratio * ratio, axis=1) - 1.0
        dF = -2.0 * np.sum(np.divide(ratio * ratio, den, out=np.zeros_like(den), where=ratio != 0), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dF < 0, -F / dF, 0.0)
        step = np.where(np.isfinite(step), step, 0.0)
        tn = np.minimum(ta + step, t_hi[active])
        done = np.abs(tn - ta) <= 1e-15 * (np.abs(ta) + amin2)
        t[active] = tn
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    converged[active] = False

    with np.errstate(divide="ignore", invalid="ignore"):
        x = a2[None, :] * z / (t[:, None] + a2[None, :])
    if focal.any():
        xf = np.zeros((focal.sum(), len(a)))
        zf = z[focal]
        nz = ~grp
        xf[:, nz] = a2[nz] * zf[:, nz] / (a2[nz] - amin2)
        left = 1.0 - np.sum((xf[:, nz] / a[nz]) ** 2, axis=1)
        first = np.flatnonzero(grp)[0]
        xf[:, first] = a[first] * np.sqrt(np.clip(left, 0.0, None))
        x[focal] = xf
    x = np.where(np.isfinite(x), x, 0.0)
    # snap onto the surface along the ray from the centre (removes roundoff drift)
    s = np.sqrt(np.sum((x / a) ** 2, axis=1))
    x = x / np.where(s > 0, s, 1.0)[:, None]

    # competing footpoint: mirror image through the minimal-axis plane(s)
    alt = x.copy()
    alt[:, grp] *= -1.0
    gap = np.linalg.norm(z - alt, axis=1) - np.linalg.norm(z - x, axis=1)
    medial = (gap <= 10 * tol) & (np.linalg.norm(x - alt, axis=1) > 10 * tol)
    return sgn * x, medial, converged


def _ellipsoid(shape, q, hessian):
    a = np.array(shape.params)
    x, medial, conv = _ellipsoid_foot(a, q, shape.tol_surface)
    grad_phi = 2.0 * x / (a * a)
    n, L = _shape_operator(grad_phi, np.broadcast_to(np.diag(2.0 / (a * a)), (len(q), len(a), len(a))))
    b = np.einsum("ij,ij->i", q - x, n)
    hess = _transport_from_foot(L, b) if hessian else None
    return b, n, hess, medial, conv, x


def _harmonic_phi(shape, x, derivatives=2):
    R = shape.params[0]
    g, gg, hg = harmonics.perturbation(shape.params[1:], x, derivatives)
    r = np.linalg.norm(x, axis=1)
    phi = r - R * (1.0 + g)
    if derivatives == 0:
        return phi, None, None
    u = x / r[:, None]
    grad = u - R * gg
    hess = None
    if derivatives >= 2:
        hess = (np.eye(x.shape[1])[None] - _outer(u, u)) / r[:, None, None] - R * hg
    return phi, grad, hess


def _harmonic_radial(shape, direction):
    g, _, _ = harmonics.perturbation(shape.params[1:], direction, derivatives=0)
    return shape.params[0] * (1.0 + g)[:, None] * direction


def _kkt_newton(shape, y, x0, tol):
    """Damped Newton on ``x - y + lam grad phi(x) = 0, phi(x) = 0``."""
    n, d = y.shape
    x = x0.copy()
    _, g0, _ = _harmonic_phi(shape, x, 1)
    lam = np.einsum("ij,ij->i", y - x, g0) / np.einsum("ij,ij->i", g0, g0)
    converged = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    extra = np.zeros(n, dtype=bool)

    def residual(xx, ll, yy):
        phi, g, h = _harmonic_phi(shape, xx, 2)
        F = np.concatenate([xx - yy + ll[:, None] * g, phi[:, None]], axis=1)
        return F, g, h

    for _ in range(NEWTON_MAX_ITER):
        if not active.any():
            break
        ia = np.flatnonzero(active)
        xa, la, ya = x[ia], lam[ia], y[ia]
        F, g, h = residual(xa, la, ya)
        J = np.zeros((len(ia), d + 1, d + 1))
        J[:, :d, :d] = np.eye(d)[None] + la[:, None, None] * h
        J[:, :d, d] = g
        J[:, d, :d] = g
        try:
            step = np.linalg.solve(J, -F[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            step = np.stack([np.linalg.lstsq(Ji, -Fi, rcond=None)[0] for Ji, Fi in zip(J, F)])
        fnorm = np.linalg.norm(F, axis=1)
        alpha = np.ones(len(ia))
        pending = np.ones(len(ia), dtype=bool)
        xn, ln = xa.copy(), la.copy()
        for _ in range(12):
            xt = xa + alpha[:, None] * step[:, :d]
            lt = la + alpha * step[:, d]
            Ft, _, _ = residual(xt, lt, ya)
            ok = pending & (np.linalg.norm(Ft, axis=1) <= (1.0 - 1e-4 * alpha) * fnorm + 1e-14 * shape.diameter)
            xn[ok], ln[ok] = xt[ok], lt[ok]
            pending &= ~ok
            if not pending.any():
                break
            alpha[pending] *= 0.5
        # accept the smallest trial step when line search stalls
        xn[pending] = xa[pending] + alpha[pending, None] * step[pending, :d]
        ln[pending] = la[pending] + alpha[pending] * step[pending, d]
        x[ia], lam[ia] = xn, ln
        small = np.linalg.norm(step[:, :d], axis=1) * alpha <= tol
        # one polishing iteration after the step criterion is met
        finished = small & extra[ia]
        extra[ia[small]] = True
        converged[ia[finished]] = True
        active[ia[finished]] = False
    phi, _, _ = _harmonic_phi(shape, x, 0)
    converged &= np.abs(phi) <= tol
    return x, converged


def _harmonic(shape, q, hessian, medial_check):
    r = np.linalg.norm(q, axis=1)
    centre = r <= shape.tol_surface
    qs = q.copy()
    qs[centre] = np.eye(shape.dim)[-1] * shape.tol_surface * 10
    u = qs / np.linalg.norm(qs, axis=1)[:, None]
    x0 = _harmonic_radial(shape, u)
    tol = shape.tol_surface
    x, conv = _kkt_newton(shape, qs, x0, tol)
    medial = centre.copy()
    if medial_check:
        # second start: rotate the radial direction by ~0.1 rad in a fixed tangent direction
        ref = np.zeros_like(u)
        ref[:, 0] = 1.0
        near = np.abs(u[:, 0]) > 0.9
        ref[near] = 0.0
        ref[near, 1] = 1.0
        tang = ref - np.einsum("ij,ij->i", ref, u)[:, None] * u
        tang /= np.linalg.norm(tang, axis=1)[:, None]
        u2 = u + 0.1 * tang
        u2 /= np.linalg.norm(u2, axis=1)[:, None]
        x2, conv2 = _kkt_newton(shape, qs, _harmonic_radial(shape, u2), tol)
        both = conv & conv2
        medial |= both & (np.linalg.norm(x - x2, axis=1) > 10 * tol)
    _, gphi, hphi = _harmonic_phi(shape, x, 2)
    n, L = _shape_operator(gphi, hphi)
    b = np.einsum("ij,ij->i", qs - x, n)
    hess = _transport_from_foot(L, b) if hessian else None
    return b, n, hess, medial, conv, x


def _evaluate_chunk(shape, X, hessian, medial_check):
    c = np.array(shape.center)
    q = X - c
    if shape.kind in ("ellipsoid", "harmonic_sphere"):
        if shape.kind == "ellipsoid":
            b, n, hess, medial, conv, foot = _ellipsoid(shape, q, hessian)
        else:
            b, n, hess, medial, conv, foot = _harmonic(shape, q, hessian, medial_check)
        return SdfField(b, n, foot + c, hess, medial, conv)
    fn = {"ball": _ball, "torus": _torus, "capsule": _capsule, "union_of_balls": _union}[shape.kind]
    b, n, hess, medial = fn(shape, q, hessian)
    return SdfField(b, n, X - b[:, None] * n, hess, medial, None)


def evaluate(shape: ShapeSpec, X, hessian: bool = True, medial_check: bool = False) -> SdfField:
    """Signed distance, normal, footpoint and (optionally) Hessian at each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != shape.dim:
        raise InvalidInput(f"points have dimension {X.shape[1]}, shape has {shape.dim}")
    if len(X) <= CHUNK:
        return _evaluate_chunk(shape, X, hessian, medial_check)
    parts = [_evaluate_chunk(shape, X[i : i + CHUNK], hessian, medial_check) for i in range(0, len(X), CHUNK)]
    return SdfField.concat(parts)


def signed_distance(shape: ShapeSpec, X) -> np.ndarray:
    return evaluate(shape, X, hessian=False).b


def eval_sdf(shape: ShapeSpec, x) -> SdfSample:
    field_ = evaluate(shape, np.asarray(x, dtype=float)[None, :], hessian=True, medial_check=True)
    if not field_.converged[0]:
        raise NonConvergedProjection(f"footpoint projection failed at {list(x)}")
    return SdfSample(
        float(field_.b[0]), field_.grad[0], field_.hess[0], footpoint_valid=not bool(field_.medial[0])
    )


def project_to_surface(shape: ShapeSpec, x) -> np.ndarray:
    """Footpoint ``p(x) = x - b(x) grad b(x)``; single point or ``(N, d)`` batch."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    field_ = evaluate(shape, np.atleast_2d(x), hessian=False, medial_check=True)
    if not field_.converged.all():
        raise NonConvergedProjection("footpoint projection did not converge")
    if field_.medial.any():
        raise MedialAxisProximity("point is (numerically) on the medial axis: footpoint not unique")
    return field_.foot[0] if single else field_.foot


def fd_hessian(shape: ShapeSpec, X, step: float = None) -> np.ndarray:
    """Central finite differences of the gradient (step defaults to eps^(1/3) * diameter)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if step is None:
        step = np.finfo(float).eps ** (1.0 / 3.0) * shape.diameter
    d = shape.dim
    H = np.zeros((len(X), d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = step
        gp = evaluate(shape, X + e, hessian=False).grad
        gm = evaluate(shape, X - e, hessian=False).grad
        H[:, :, j] = (gp - gm) / (2 * step)
    return 0.5 * (H + H.transpose(0, 2, 1))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def grid_axes(box: AmbientBox, spacing: float, cell_centers: bool = False, max_nodes=DEFAULT_MAX_NODES):
    if not spacing > 0 or not np.isfinite(spacing):
        raise InvalidInput(f"spacing must be positive, got {spacing}")
    counts = [int(np.floor((hi - lo) / spacing + 1e-9)) for lo, hi in zip(box.lo, box.hi)]
    total = np.prod([c if cell_centers else c + 1 for c in counts], dtype=float)
    if total > max_nodes:
        raise GridTooLarge(f"grid would have {total:.3g} nodes (budget {max_nodes:.3g})")
    if cell_centers:
        return [lo + (np.arange(c) + 0.5) * spacing for lo, c in zip(box.lo, counts)]
    return [lo + np.arange(c + 1) * spacing for lo, c in zip(box.lo, counts)]


def grid_points(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


OUTSIDE, INSIDE, TUBE = 0, 1, 2


@dataclass
class GridSample:
    axes: list
    spacing: float
    field: SdfField
    labels: np.ndarray = field(repr=False)

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def b(self) -> np.ndarray:
        return self.field.b.reshape(self.shape)

    @property
    def points(self) -> np.ndarray:
        return grid_points(self.axes)

    def sample(self, index) -> SdfSample:
        flat = np.ravel_multi_index(index, self.shape)
        H = None if self.field.hess is None else self.field.hess[flat]
        return SdfSample(float(self.field.b[flat]), self.field.grad[flat], H, bool(self.field.valid[flat]))


def sample_grid(
    shape: ShapeSpec,
    box: AmbientBox,
    spacing: float,
    tube_width: float = None,
    hessian: bool = False,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> GridSample:
    """Uniform Cartesian grid of SDF samples covering ``box`` (nodes include both ends)."""
    axes = grid_axes(box, spacing, max_nodes=max_nodes)
    f = evaluate(shape, grid_points(axes), hessian=hessian)
    labels = np.where(f.b < 0, INSIDE, OUTSIDE).astype(np.int8)
    if tube_width is not None:
        labels[np.abs(f.b) < tube_width] = TUBE
    return GridSample(axes, spacing, f, labels)
