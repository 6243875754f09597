"""Certificate quantities against the filter cutoff for the default sedan.

    python3 scripts/sweep_cutoff.py --lo 1 --hi 1e5 --n 17
"""
import argparse
import sys

import numpy as np

from neural_l1.certify import certify_design
from neural_l1.controllers import design_gains
from neural_l1.harness.config import default_vehicle
from neural_l1.plant import build_plant
from neural_l1.signals import ProjectionSet


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lo", type=float, default=1.0)
    p.add_argument("--hi", type=float, default=1e5)
    p.add_argument("--n", type=int, default=17)
    p.add_argument("--theta-zeta", type=float, default=2.0)
    p.add_argument("--theta-w", type=float, default=1.0)
    args = p.parse_args(argv)

    plant = build_plant(default_vehicle())
    gains = design_gains(plant)
    zset, wset = ProjectionSet(args.theta_zeta), ProjectionSet(args.theta_w)
    print(f"{'omega_c':>10} {'lambda1':>10} {'lambda2':>10} {'x_tilde':>10} {'gamma1':>10} {'gamma2':>10}  ok")
    for w in np.logspace(np.log10(args.lo), np.log10(args.hi), args.n):
        rep = certify_design(plant, gains, w, zset, wset, 100.0, 1000.0, raise_on_fail=False)
        # gamma bounds only exist once lambda1 < 1
        g = (f"{rep.gamma1():10.4g} {rep.gamma2():10.4g}" if rep.lambda1 < 1 else f"{'-':>10} {'-':>10}")
        print(f"{w:10.4g} {rep.lambda1:10.4g} {rep.lambda2:10.4g} {rep.x_tilde_bound:10.4g} {g}  "
              f"{'yes' if rep.passed else 'no'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
