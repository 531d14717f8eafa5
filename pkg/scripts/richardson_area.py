"""Sphere area and Willmore energy under grid refinement, with observed orders."""

import numpy as np

from tubecalc.functionals import IntegrandSpec, QuadParams, eval_F1
from tubecalc.geometry import ShapeSpec
from tubecalc.tube import build_tube, surface_integral


def main():
    sphere = ShapeSpec.ball(1.0)
    willmore = IntegrandSpec.from_name("willmore")
    spacings = [0.08, 0.04, 0.02]
    for h in (0.2,):
        area = np.array([surface_integral(build_tube(sphere, h, s), 1.0) for s in spacings])
        will = np.array([eval_F1(sphere, willmore, QuadParams(h, s)) for s in spacings])
        for name, vals, exact in (("area", area, 4 * np.pi), ("willmore", will, 16 * np.pi)):
            err = np.abs(vals - exact)
            orders = np.log2(err[:-1] / err[1:])
            print(f"h={h:<4} {name:<9} errors {np.array2string(err, precision=3)}  orders {np.round(orders, 2)}")


if __name__ == "__main__":
    main()
