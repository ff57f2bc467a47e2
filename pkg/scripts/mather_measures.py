"""Sample optimal closed measures and compare the representation formula with a sweep limit.

    python3 scripts/mather_measures.py [--builtin double-well]
"""

import argparse
import warnings

import numpy as np

from weakkam import hamiltonian as Hm
from weakkam import kernel as K
from weakkam import mather as M
from weakkam import stationary as St
from weakkam.scenarios import BUILTINS, builtin


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--builtin", default="double-well", choices=[b for b in BUILTINS if b not in ("oscillating", "pendulum-2d")])
    ap.add_argument("--resolution", type=int, default=128)
    args = ap.parse_args(argv)

    sc = builtin(args.builtin).with_(resolution=args.resolution)
    grid = sc.grid
    G = St.frozen_model(sc.model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        L = Hm.legendre_transform(G, grid, sc.kernel.velocity_fraction * G.momentum_box, sc.kernel.v_samples)
    found = M.sample_mather_measures(L, sc.mather.basis, n_perturb=sc.mather.perturbations)
    c = -found[0].objective
    print(f"critical value from the LP: {c:.6f}")
    xs = grid.coords()[:, 0]
    for k, r in enumerate(found):
        supp = r.measure.support()
        where = ", ".join(f"x={xs[i]:.3f} v={r.measure.velocities[j, 0]:+.2f} w={r.measure.weights[i, j]:.3f}" for i, j in supp[:4])
        more = f" (+{len(supp) - 4} more)" if len(supp) > 4 else ""
        print(f"  measure {k}: objective {r.objective:.6f}, closedness {r.violation:.1e}; {where}{more}")

    B = K.compute_barriers(L, c, sc.kernel.tau, sc.kernel.t_max, sc.kernel.window)
    rep = M.representation_value(B.h, found)
    if sc.model.kind == "discounted":
        sweep = St.lambda_sweep(sc.model, c, sc.lambda_schedule, grid=grid)
        lim = sweep.limit
        gap = np.max(np.abs(rep.values - lim.values)) / np.ptp(lim.values)
        print(f"representation vs sweep limit: sup gap {100 * gap:.2f}% of the limit's range")
    print(f"|Aubry set| = {len(B.aubry)} nodes, min_z h(z, z) = {np.min(np.diag(B.h)):.2e}")


if __name__ == "__main__":
    main()
