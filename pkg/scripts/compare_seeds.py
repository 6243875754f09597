"""Run one config over several seeds and tabulate max|e1| per controller.

    python3 scripts/compare_seeds.py --config configs/circle.yaml --seeds 0-4 --duration 20
"""
import argparse
import dataclasses
import sys
from collections import defaultdict

import numpy as np

from neural_l1.harness import load_config, run_scenario


def seed_range(text):
    if "-" in text:
        a, b = text.split("-", 1)
        return list(range(int(a), int(b) + 1))
    return [int(t) for t in text.split(",")]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/circle.yaml")
    p.add_argument("--seeds", type=seed_range, default=[0, 1, 2])
    p.add_argument("--duration", type=float, default=None, help="override scenario duration [s]")
    args = p.parse_args(argv)

    for sc in load_config(args.config):
        if args.duration is not None:
            sc = dataclasses.replace(sc, duration=args.duration)
        peak = defaultdict(list)
        div = defaultdict(int)
        for seed in args.seeds:
            res = run_scenario(sc.with_seed(seed), override=True)
            for kind, m in res.metrics.items():
                peak[kind].append(m.max_abs_e1)
                div[kind] += m.diverged
        print(f"{sc.name}: {len(args.seeds)} seeds, {sc.duration:g} s")
        print(f"  {'controller':<10} {'mean max|e1|':>13} {'std':>10} {'diverged':>9}")
        for kind in sorted(peak, key=lambda k: (div[k], np.mean(peak[k]))):
            v = np.array(peak[kind])
            print(f"  {kind.label:<10} {v.mean():13.4g} {v.std():10.3g} {div[kind]:>6}/{len(v)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
