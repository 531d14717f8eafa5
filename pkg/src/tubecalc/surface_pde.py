"""Laplace-Beltrami problems on the boundary, solved on the thickened surface.

A field on the boundary is represented by its normal extension ``u o p`` on
the tube.  The unknowns are multilinear (Q1) nodal values on the corners of
the tube cells.  In each cell the energy density is

    1/(2h J) * [ 1/2 |P (I + t L) grad u|^2 + eps/2 <grad u, nu>^2 ] + source term,

where ``(I + t L)`` transports the gradient at offset ``t`` back to the
footpoint (``L`` is the Hessian of b there), so the tangential part is exact
for normally constant fields.  The normal penalty removes the discrete kernel
across the tube; it vanishes on ``u o p``.  Cell integrals of the quadratic
terms are exact for Q1 functions with the cell tensor frozen at the centre.

Sign convention: the solver returns the zero-mean ``v`` with
``Laplace_Gamma v = f``, i.e. the minimiser of
``1/2 int |grad_Gamma v|^2 + int f v``.  Pass ``convention="energy"`` for the
minimiser of ``1/2 int |grad_Gamma v|^2 - int f v`` instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sps

from .errors import InvalidInput, NoConvergence, SingularWithoutRegularization
from .functionals import QuadParams
from .geometry import evaluate
from .linalg import pcg
from .tube import TubeQuadrature, build_tube, surface_integral

TOL_CG = 1e-8


@lru_cache(maxsize=None)
def _reference(d: int):
    """Unit-cell Q1 integrals: stiffness blocks S[i, j], mass M, centre gradients G."""
    corners = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
    sgn = 2 * corners - 1  # derivative of phi_0 = 1 - x is -1, of phi_1 = x is +1
    same = (corners[:, None, :] == corners[None, :, :]).astype(float)
    mass_1d = np.where(same > 0, 1.0 / 3.0, 1.0 / 6.0)  # (a, b, k)
    S = np.zeros((d, d, len(corners), len(corners)))
    for i in range(d):
        for j in range(d):
            prod = np.ones((len(corners), len(corners)))
            for k in range(d):
                if k == i == j:
                    fac = sgn[:, None, k] * sgn[None, :, k] * 1.0
                elif k == i:
                    fac = sgn[:, None, k] * 0.5 * np.ones((1, len(corners)))
                elif k == j:
                    fac = 0.5 * sgn[None, :, k] * np.ones((len(corners), 1))
                else:
                    fac = mass_1d[:, :, k]
                prod = prod * fac
            S[i, j] = prod
    M = np.prod(mass_1d, axis=2)
    G = (sgn * 0.5 ** (d - 1)).T  # (d, 2^d)
    return corners, S, M, G


@dataclass
class TubeMesh:
    """Q1 node numbering on the cells of a tube quadrature."""

    quad: TubeQuadrature
    nodes: np.ndarray  # (n_nodes, d) integer grid indices of the corners
    conn: np.ndarray  # (n_cells, 2^d) node ids per cell

    @classmethod
    def from_quad(cls, quad: TubeQuadrature) -> "TubeMesh":
        d = quad.shape.dim
        corners, _, _, _ = _reference(d)
        idx = quad.cell_index[:, None, :] + corners[None, :, :]
        dims = idx.reshape(-1, d).max(axis=0) + 1
        lin = np.ravel_multi_index(tuple(idx.reshape(-1, d).T), dims)
        uniq, inv = np.unique(lin, return_inverse=True)
        nodes = np.stack(np.unravel_index(uniq, dims), axis=1)
        return cls(quad, nodes, inv.reshape(len(quad), -1))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def points(self) -> np.ndarray:
        return self.quad.origin + self.nodes * self.quad.spacing

    def cell_values(self, u):
        return u[self.conn].mean(axis=1)

    def cell_gradients(self, u):
        _, _, _, G = _reference(self.quad.shape.dim)
        return u[self.conn] @ G.T / self.quad.spacing

    def transport(self):
        """Per-cell ``(I + t L)``, mapping grad(u o p)(y) to the footpoint."""
        q = self.quad
        return np.eye(q.shape.dim)[None] + q.t[:, None, None] * q.hess_foot

    def tangential_gradients(self, u):
        q = self.quad
        g = np.einsum("nij,nj->ni", self.transport(), self.cell_gradients(u))
        return g - np.einsum("ni,ni->n", g, q.nu)[:, None] * q.nu

    def assemble(self, eps_normal: float, tangential: bool = True):
        """Stiffness ``A`` and consistent mass ``M`` as CSR matrices."""
        q = self.quad
        d = q.shape.dim
        _, S, Mref, _ = _reference(d)
        dx = q.spacing
        coef = 1.0 / (2.0 * q.h * q.J)
        K = np.zeros((len(q), d, d))
        if tangential:
            T = self.transport()
            P = np.eye(d)[None] - q.nu[:, :, None] * q.nu[:, None, :]
            K += T @ P @ T
        K += eps_normal * q.nu[:, :, None] * q.nu[:, None, :]
        Ae = np.einsum("n,nij,ijab->nab", coef * dx ** (d - 2), K, S)
        Me = np.einsum("n,ab->nab", coef * dx**d, Mref)
        rows = np.repeat(self.conn, self.conn.shape[1], axis=1).ravel()
        cols = np.tile(self.conn, (1, self.conn.shape[1])).ravel()
        shape = (self.n_nodes, self.n_nodes)
        A = sps.csr_matrix((Ae.ravel(), (rows, cols)), shape=shape)
        M = sps.csr_matrix((Me.ravel(), (rows, cols)), shape=shape)
        return A, M

    def load(self, cell_f):
        """Nodal vector of ``int f u`` for cellwise-constant ``f``."""
        w = self.quad.weights * cell_f / self.conn.shape[1]
        return np.bincount(self.conn.ravel(), weights=np.repeat(w, self.conn.shape[1]), minlength=self.n_nodes)


@dataclass
class EnergyReport:
    dirichlet: float
    load: float
    total: float
    cg_iters: int
    residual: float
    normal_penalty: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SurfaceField:
    values: np.ndarray
    mesh: TubeMesh
    zero_mean: bool = True

    @property
    def quad(self) -> TubeQuadrature:
        return self.mesh.quad

    def at_footpoints(self) -> np.ndarray:
        """Field value attributed to each tube node's footpoint."""
        return self.mesh.cell_values(self.values)

    def surface_gradient(self) -> np.ndarray:
        return self.mesh.tangential_gradients(self.values)

    def surface_mean(self) -> float:
        return surface_integral(self.quad, self.at_footpoints()) / np.sum(self.quad.weights)

    def normal_derivative_norm(self) -> float:
        g = self.mesh.cell_gradients(self.values)
        dn = np.einsum("ni,ni->n", g, self.quad.nu)
        return float(np.sqrt(surface_integral(self.quad, dn * dn)))

    def to_csv(self, path):
        pts = self.mesh.points
        f = evaluate(self.quad.shape, pts, hessian=False)
        d = pts.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"y{i}" for i in range(d)] + ["t"] + [f"x{i}" for i in range(d)] + ["value"])
            for i in range(len(pts)):
                w.writerow(list(pts[i]) + [f.b[i]] + list(f.foot[i]) + [self.values[i]])


class LaplaceBeltrami:
    """Discrete operator on one tube; reused by the solver, eigen-estimates and tests."""

    def __init__(self, quad: TubeQuadrature, eps_normal: float = 1.0):
        if eps_normal <= 0:
            raise SingularWithoutRegularization(
                "eps_normal must be positive: without it the normal direction is a discrete kernel"
            )
        self.quad = quad
        self.eps_normal = eps_normal
        self.mesh = TubeMesh.from_quad(quad)
        self.A, self.M = self.mesh.assemble(eps_normal)
        self.m = np.asarray(self.M.sum(axis=1)).ravel()
        self.diag = self.A.diagonal()
        n = self.mesh.n_nodes
        self.maxiter = int(10 * np.sqrt(n)) + 10

    @staticmethod
    def _project_constants(v):
        return v - v.mean()

    def shift_to_zero_mean(self, u):
        return u - (self.m @ u) / self.m.sum()

    def solve(self, rhs, tol=TOL_CG, x0=None):
        x, it, res = pcg(
            self.A, rhs, x0=x0, diag=self.diag, project=self._project_constants, tol=tol, maxiter=self.maxiter
        )
        return self.shift_to_zero_mean(x), it, res

    def energy(self, u, rhs):
        return 0.5 * u @ (self.A @ u) - rhs @ u

    def rhs(self, f, convention="pde"):
        """Load vector for footpoint data ``f`` projected to zero surface mean."""
        q = self.quad
        fx = f(q.x) if callable(f) else np.broadcast_to(np.asarray(f, dtype=float), (len(q),))
        fx = fx - np.sum(fx * q.weights) / np.sum(q.weights)
        sign = {"pde": -1.0, "energy": 1.0}[convention]
        return sign * self.mesh.load(fx)


def _quad_for(shape, quad_params):
    qp = quad_params or QuadParams(h=0.15, spacing=0.05)
    return build_tube(shape, qp.h, qp.spacing)


def solve_lb(shape, f, quad_params: QuadParams = None, eps_normal: float = 1.0, convention: str = "pde",
             tube: TubeQuadrature = None, operator: LaplaceBeltrami = None):
    """Zero-mean solution of the Laplace-Beltrami problem with source ``f`` (on footpoints)."""
    op = operator or LaplaceBeltrami(tube or _quad_for(shape, quad_params), eps_normal)
    rhs = op.rhs(f, convention)
    u, it, res = op.solve(rhs)
    Au = op.A @ u
    dirichlet = 0.5 * u @ Au
    At, _ = op.mesh.assemble(eps_normal, tangential=False)
    penalty = 0.5 * u @ (At @ u)
    load = float(rhs @ u)
    report = EnergyReport(float(dirichlet), load, float(dirichlet - load), it, float(res), float(penalty))
    return SurfaceField(u, op.mesh, True), report


def rayleigh_poincare(shape, quad_params: QuadParams = None, eps_normal: float = 1.0, tol: float = 1e-7,
                      maxiter: int = 200, seed: int = 0, tube: TubeQuadrature = None,
                      operator: LaplaceBeltrami = None, return_vector: bool = False):
    """Smallest Rayleigh quotient ``u^T A u / u^T M u`` over zero-mean fields (inverse power iteration)."""
    op = operator or LaplaceBeltrami(tube or _quad_for(shape, quad_params), eps_normal)
    rng = np.random.default_rng(seed)
    v = op.shift_to_zero_mean(rng.standard_normal(op.mesh.n_nodes))
    v /= np.sqrt(v @ (op.M @ v))
    lam_old = np.inf
    w = None
    for _ in range(maxiter):
        w, _, _ = op.solve(op.M @ v, tol=1e-10, x0=w)
        lam = (w @ (op.A @ w)) / (w @ (op.M @ w))
        v = w / np.sqrt(w @ (op.M @ w))
        if abs(lam - lam_old) <= tol * abs(lam):
            return (float(lam), v) if return_vector else float(lam)
        lam_old = lam
    raise NoConvergence(f"inverse iteration did not settle (last estimate {lam:.6g})", maxiter)


def eval_F2(shape, j2, f, quad_params: QuadParams = None, eps_normal: float = 1.0, convention: str = "pde",
            tube: TubeQuadrature = None):
    """``int j2(x, nu, v, grad_Gamma v) dmu`` for the Laplace-Beltrami solution ``v``."""
    field, _ = solve_lb(shape, f, quad_params, eps_normal, convention, tube=tube)
    q = field.quad
    vals = j2(q.x, q.nu, field.at_footpoints(), field.surface_gradient())
    return surface_integral(q, vals)


# named j2 integrands used by the CLI and the convergence lab
J2 = {
    "grad-sq": lambda x, nu, v, g: np.einsum("ij,ij->i", g, g),
    "value-sq": lambda x, nu, v, g: v * v,
    "one": lambda x, nu, v, g: np.ones(len(x)),
    "energy-density": lambda x, nu, v, g: 0.5 * np.einsum("ij,ij->i", g, g),
}

SOURCES = {
    "z": lambda x: x[:, -1],
    "x": lambda x: x[:, 0],
    "zonal2": lambda x: 3.0 * x[:, -1] ** 2 - 1.0,
    "zero": lambda x: np.zeros(len(x)),
}


def source(name: str):
    if name not in SOURCES:
        raise InvalidInput(f"unknown source {name!r}; choose from {sorted(SOURCES)}")
    return SOURCES[name]
