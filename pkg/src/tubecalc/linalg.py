"""Preconditioned conjugate gradients with an optional subspace projector."""

from __future__ import annotations

import numpy as np

from .errors import NoConvergence


def pcg(A, rhs, x0=None, diag=None, project=None, tol=1e-8, maxiter=1000):
    """Solve ``A x = rhs`` for SPD ``A`` (SPD on the range of ``project``).

    ``project`` must be an orthogonal projector; it is applied to the
    preconditioned residual and to the iterate every step so the iteration
    stays in the constraint subspace.  Returns ``(x, iterations, rel_residual)``.
    """
    P = project if project is not None else (lambda v: v)
    inv_diag = None if diag is None else 1.0 / diag
    x = P(np.zeros_like(rhs) if x0 is None else x0.astype(float, copy=True))
    r = P(rhs - A @ x)
    norm_b = np.linalg.norm(P(rhs))
    if norm_b == 0.0:
        return np.zeros_like(rhs), 0, 0.0
    z = P(r * inv_diag) if inv_diag is not None else r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / norm_b
    for it in range(1, maxiter + 1):
        if res <= tol:
            return x, it - 1, res
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x = P(x + alpha * p)
        r = r - alpha * Ap
        res = np.linalg.norm(r) / norm_b
        z = P(r * inv_diag) if inv_diag is not None else P(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if res <= tol:
        return x, maxiter, res
    raise NoConvergence(f"CG stopped at relative residual {res:.3g} after {maxiter} iterations", maxiter, res)
