"""Grid-refinement study on the pendulum G = p^2/2 + cos(2 pi x), c = 1.

Exact values: h(0, 1/2) = 2/pi and u^0 = (2/pi)(1 - cos(pi x)) on [0, 1/2].
Prints the error of the kernel barrier, the discounted solution at small lambda
and the critical-value estimators for a sequence of resolutions.

    python3 scripts/convergence_study.py [--sizes 32 64 128 256]
"""

import argparse
import time
import warnings

import numpy as np

from weakkam import hamiltonian as Hm
from weakkam import kernel as K
from weakkam import stationary as St
from weakkam.grid import PeriodicGrid


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--lam", type=float, default=2.0**-10)
    args = ap.parse_args(argv)

    G = Hm.pendulum()
    G = G.with_(momentum_box=Hm.default_momentum_box(G, 1.0))
    exact = 2 / np.pi
    print(f"{'n':>5} {'|h-2/pi|':>10} {'|u-u0|_inf':>11} {'c discount':>11} {'c LO':>9} {'sec':>6}")
    for n in args.sizes:
        t0 = time.perf_counter()
        grid = PeriodicGrid(1, n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            L = Hm.legendre_transform(G, grid, 0.9 * G.momentum_box)
        tau = St.default_tau(grid, L.velocity_box)
        B = K.compute_barriers(L, 1.0, tau, 16.0, (8.0, 16.0))
        half = grid.nearest_node([0.5])
        u = St.solve_stationary(G, args.lam, 1.0, grid=grid)
        d = np.minimum(grid.coords()[:, 0], 1 - grid.coords()[:, 0])
        u0 = exact * (1 - np.cos(np.pi * d))
        crit = St.critical_value(G, None, [0.1, 0.03, 0.01], grid, tau=tau, strict=False)
        print(
            f"{n:>5} {abs(B.h[0, half] - exact):>10.2e} {np.max(np.abs(u.values - u0)):>11.2e}"
            f" {crit.richardson:>11.6f} {crit.lax_oleinik:>9.6f} {time.perf_counter() - t0:>6.1f}"
        )


if __name__ == "__main__":
    main()
