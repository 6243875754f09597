"""Plot lateral error, prediction error and disturbance estimate from a run directory.

    neural-l1 run --config configs/circle.yaml --out runs
    python3 scripts/plot_run.py runs/circle --save circle.png

Needs matplotlib (``pip install matplotlib``); the package itself does not.
"""
import argparse
import sys
from pathlib import Path

import matplotlib

from neural_l1.harness.io import read_trace_csv


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("run_dir", type=Path)
    p.add_argument("--save", type=Path, default=None, help="write a PNG instead of opening a window")
    args = p.parse_args(argv)
    if args.save is not None:
        matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    traces = sorted(f for f in args.run_dir.glob("*.csv") if f.name != "metrics.csv")
    if not traces:
        print(f"no trace files in {args.run_dir}", file=sys.stderr)
        return 1
    fig, ax = plt.subplots(3, 1, sharex=True, figsize=(9, 8))
    longest = None
    for path in traces:
        _, cols, data = read_trace_csv(path)
        c = {name: i for i, name in enumerate(cols)}
        t = data[:, c["t"]]
        if longest is None or len(t) > len(longest[0]):
            longest = (t, data[:, c["disturbance"]])
        ax[0].plot(t, data[:, c["x0"]], label=path.stem)
        xt = data[:, [c[f"xhat{i}"] for i in range(4)]] - data[:, [c[f"x{i}"] for i in range(4)]]
        ax[1].plot(t, abs(xt).max(axis=1), label=path.stem)
        if path.stem != "lf":
            est = data[:, c["delta_hat"]] + data[:, c["zeta_hat_x"]]
            ax[2].plot(t, est, label=f"{path.stem} estimate")
    # the true uncertainty depends on the state; show it for the run that lasted longest
    ax[2].plot(*longest, "k", lw=0.6, label="true")
    ax[0].set_ylabel("e1 [m]")
    ax[1].set_ylabel("|x_tilde|_inf")
    ax[1].set_yscale("log")
    ax[2].set_ylabel("matched uncertainty")
    ax[2].set_xlabel("t [s]")
    for a in ax:
        a.legend(fontsize=8)
        a.grid(alpha=0.3)
    fig.tight_layout()
    if args.save is not None:
        fig.savefig(args.save, dpi=120)
    else:
        plt.show()
    return 0


if __name__ == "__main__":
    sys.exit(main())
