"""Harmonic polynomial basis for radially perturbed spheres.

Each basis element is a homogeneous harmonic polynomial ``q`` of degree
``l`` (1 <= l <= 4).  On the unit sphere ``q(u)`` is a (non-normalised) real
spherical harmonic; off the sphere we use the degree-0 homogeneous extension
``q(x) / |x|**l`` so that the perturbation only depends on the direction.

Derivatives are generated once with sympy and lambdified to numpy.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp

_X, _Y, _Z = sp.symbols("x y z", real=True)

# Ordered by degree, then by m = -l..l (Cartesian solid harmonics).
_BASIS_3D = [
    # l = 1
    "y", "z", "x",
    # l = 2
    "x*y", "y*z", "3*z**2 - (x**2 + y**2 + z**2)", "x*z", "x**2 - y**2",
    # l = 3
    "y*(3*x**2 - y**2)", "x*y*z", "y*(5*z**2 - (x**2 + y**2 + z**2))",
    "z*(5*z**2 - 3*(x**2 + y**2 + z**2))", "x*(5*z**2 - (x**2 + y**2 + z**2))",
    "z*(x**2 - y**2)", "x*(x**2 - 3*y**2)",
    # l = 4
    "x*y*(x**2 - y**2)", "y*z*(3*x**2 - y**2)", "x*y*(7*z**2 - (x**2 + y**2 + z**2))",
    "y*z*(7*z**2 - 3*(x**2 + y**2 + z**2))",
    "35*z**4 - 30*z**2*(x**2 + y**2 + z**2) + 3*(x**2 + y**2 + z**2)**2",
    "x*z*(7*z**2 - 3*(x**2 + y**2 + z**2))", "(x**2 - y**2)*(7*z**2 - (x**2 + y**2 + z**2))",
    "x*z*(x**2 - 3*y**2)", "x**4 - 6*x**2*y**2 + y**4",
]

# Re/Im of (x + i y)^k, k = 1..4.
_BASIS_2D = [
    "x", "y",
    "x**2 - y**2", "2*x*y",
    "x**3 - 3*x*y**2", "3*x**2*y - y**3",
    "x**4 - 6*x**2*y**2 + y**4", "4*x**3*y - 4*x*y**3",
]


def n_basis(dim: int) -> int:
    return len(_BASIS_3D) if dim == 3 else len(_BASIS_2D)


@lru_cache(maxsize=None)
def _compiled(dim: int):
    syms = (_X, _Y, _Z) if dim == 3 else (_X, _Y)
    table = _BASIS_3D if dim == 3 else _BASIS_2D
    out = []
    for text in table:
        expr = sp.expand(sp.sympify(text, locals={"x": _X, "y": _Y, "z": _Z}))
        degree = sp.Poly(expr, *syms).total_degree()
        grad = [sp.diff(expr, s) for s in syms]
        hess = [[sp.diff(g, s) for s in syms] for g in grad]
        out.append(
            (
                degree,
                sp.lambdify(syms, expr, "numpy"),
                sp.lambdify(syms, grad, "numpy"),
                sp.lambdify(syms, hess, "numpy"),
            )
        )
    return out


def _broadcast(value, n):
    return np.broadcast_to(np.asarray(value, dtype=float), (n,))


def perturbation(coefs, q: np.ndarray, derivatives: int = 2):
    """Evaluate ``g(x) = sum_k c_k q_k(x) / |x|^{l_k}`` with gradient and Hessian.

    ``q`` has shape (N, d) and must avoid the origin.  Returns ``(g, grad, hess)``
    where unrequested derivatives are ``None``.
    """
    q = np.asarray(q, dtype=float)
    n, dim = q.shape
    coords = [q[:, i] for i in range(dim)]
    r2 = np.einsum("ij,ij->i", q, q)
    r = np.sqrt(r2)
    g = np.zeros(n)
    grad = np.zeros((n, dim)) if derivatives >= 1 else None
    hess = np.zeros((n, dim, dim)) if derivatives >= 2 else None
    eye = np.eye(dim)
    for c, (degree, fq, fgrad, fhess) in zip(coefs, _compiled(dim)):
        if c == 0.0:
            continue
        val = _broadcast(fq(*coords), n)
        rl = r ** (-degree)
        g += c * val * rl
        if derivatives >= 1:
            gq = np.stack([_broadcast(v, n) for v in fgrad(*coords)], axis=1)
            grad += c * (rl[:, None] * gq - (degree * val * rl / r2)[:, None] * q)
        if derivatives >= 2:
            hq = np.stack(
                [np.stack([_broadcast(v, n) for v in row], axis=1) for row in fhess(*coords)],
                axis=1,
            )
            cross = gq[:, :, None] * q[:, None, :] + q[:, :, None] * gq[:, None, :]
            qq = q[:, :, None] * q[:, None, :]
            rl2 = rl / r2
            hess += c * (
                rl[:, None, None] * hq
                - degree * rl2[:, None, None] * cross
                - (degree * val * rl2)[:, None, None] * eye
                + (degree * (degree + 2) * val * rl2 / r2)[:, None, None] * qq
            )
    return g, grad, hess


def fibonacci_directions(n: int, dim: int) -> np.ndarray:
    """Quasi-uniform unit vectors (Fibonacci lattice on S^2, equispaced on S^1)."""
    if dim == 2:
        theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
        return np.stack([np.cos(theta), np.sin(theta)], axis=1)
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = np.pi * (1.0 + 5**0.5) * i
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
