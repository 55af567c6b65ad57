"""max_util sweep on a synthetic design: print the Pareto front of (crossing cost, peak slot utilization).

    python3 scripts/sweep_demo.py [--rows 6 --cols 6] [--jobs 2]
"""

import argparse

from autofloor import preset
from autofloor.floorplan import pareto_front, sweep_attempts
from autofloor.io import parse_sweep
from autofloor.synth import cnn_grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=6)
    ap.add_argument("--cols", type=int, default=6)
    ap.add_argument("--sweep", default="0.5:0.9:0.1")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    g = cnn_grid(rows=args.rows, cols=args.cols, tail=6, tail_skips=3)
    dev = preset("u250")
    utils = parse_sweep(args.sweep)
    attempts = sweep_attempts(g, dev, utils, jobs=args.jobs)
    for a in attempts:
        if a.candidate is None:
            print(f"max_util {a.max_util:.2f}: {a.error}")
        else:
            c = a.candidate
            print(f"max_util {a.max_util:.2f}: cost {c.cost}, peak slot util {c.max_slot_util:.3f}")
    print("Pareto front:")
    for c in pareto_front(a.candidate for a in attempts if a.candidate is not None):
        print(f"  cost {c.cost:6d}  peak util {c.max_slot_util:.3f}  (max_util {c.max_util:.2f})")


if __name__ == "__main__":
    main()
