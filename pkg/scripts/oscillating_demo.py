"""A discounted family that does not converge as lambda -> 0.

The Hamiltonian switches between two targets f and g (both critical solutions of
the double-well problem) along a 1/m schedule. Each u^lambda tracks its target
to within lambda, so the two subsequences settle on different limits.

    python3 scripts/oscillating_demo.py [--resolution 64]
"""

import argparse

import numpy as np

from weakkam import hamiltonian as Hm
from weakkam import stationary as St
from weakkam.grid import PeriodicGrid
from weakkam.scenarios import OSCILLATING_SWEEP


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--resolution", type=int, default=64)
    args = ap.parse_args(argv)

    grid = PeriodicGrid(1, args.resolution)
    G = Hm.double_well()
    G = G.with_(momentum_box=Hm.default_momentum_box(G, 1.0))
    f = grid.evaluate(lambda x: (1 - np.cos(2 * np.pi * x[:, 0])) / np.pi)
    g = grid.evaluate(lambda x: (1 + np.cos(2 * np.pi * x[:, 0])) / np.pi)
    model = Hm.build_oscillating(G, f, g, c=1.0)
    sweep = St.lambda_sweep(model, 1.0, OSCILLATING_SWEEP, grid=grid)
    rep = St.branch_report(model, sweep)

    print(f"{'lambda':>10} {'branch':>6} {'|u-f|':>8} {'|u-g|':>8} {'gap to prev':>12}")
    for k, (lam, b, u) in enumerate(zip(rep.lambdas, rep.branches, sweep.solutions)):
        gap = f"{sweep.gaps[k - 1]:.4f}" if k else ""
        df, dg = np.max(np.abs(u.values - f.values)), np.max(np.abs(u.values - g.values))
        print(f"{lam:>10.5f} {b:>6} {df:>8.4f} {dg:>8.4f} {gap:>12}")
    print()
    print(f"sup|f - g|                      = {rep.target_distance:.4f}")
    print(f"distance between limit candidates = {rep.limit_distance:.4f}")
    print(f"max excess over lambda          = {max(rep.excess):.4f}")
    print(f"non-Cauchy flag                 = {sweep.non_cauchy}")


if __name__ == "__main__":
    main()
