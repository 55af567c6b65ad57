"""Time the floorplanner on the 493-task / 925-channel synthetic grid design.

    python3 scripts/scalability.py [--device u250] [--time-limit 600]
"""

import argparse
import logging
import time

from autofloor import preset
from autofloor.floorplan import partition_trace
from autofloor.model import capacity_violations, make_floorplan
from autofloor.synth import cnn_grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--device", default="u250")
    ap.add_argument("--time-limit", type=float, default=600)
    ap.add_argument("--max-util", type=float, default=0.7)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    g = cnn_grid()
    dev = preset(args.device)
    print(f"{len(g.tasks)} tasks, {len(g.channels)} channels on {dev.name}")
    t0 = time.perf_counter()
    state = None
    for state, cost in partition_trace(g, dev, args.max_util, time_limit=args.time_limit):
        print(f"iteration {state.iteration}: cost {cost}, elapsed {time.perf_counter() - t0:.1f}s", flush=True)
    fp = make_floorplan(g, dict(state.coords), dev)
    problems = capacity_violations(fp, dev, args.max_util)
    print(f"total {time.perf_counter() - t0:.1f}s, crossing cost {fp.cost}, "
          f"max slot util {max(max(fp.util[xy].as_tuple()[k] / c for k, c in enumerate(dev.slot(*xy).capacity) if c) for xy in fp.util):.3f}, "
          f"violations: {problems or 'none'}")


if __name__ == "__main__":
    main()
