"""Max-norm error of the cut-cell Poisson solver on the unit ball, u = (|x|^2 - 1)/6."""

import numpy as np

from tubecalc.domain_pde import J3, eval_F3, solve_poisson_dirichlet
from tubecalc.geometry import ShapeSpec


def main():
    ball = ShapeSpec.ball(1.0)
    errs = []
    for s in (0.08, 0.04, 0.02):
        f = solve_poisson_dirichlet(ball, 1.0, 0.0, spacing=s)
        pts = f.points[f.inside]
        errs.append(np.max(np.abs(f.values[f.inside] - (np.sum(pts**2, axis=1) - 1) / 6)))
        print(f"spacing {s:<5} max error {errs[-1]:.3e}")
    print("orders", np.round(np.log2(np.array(errs[:-1]) / np.array(errs[1:])), 3))
    F3 = eval_F3(ball, J3["dnu-sq"], 1.0, 0.0, spacing=0.02)
    print(f"F3 = {F3:.5f}  (exact {4 * np.pi / 9:.5f})")


if __name__ == "__main__":
    main()
