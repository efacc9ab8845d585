#!/usr/bin/env python3
"""Watch one negotiation play out, step by step.

Runs a single seeded scenario and prints each vehicle's state per control
step, plus the closest approach and per-vehicle mission times at the end::

    python3 scripts/single_run_demo.py --n 6 --seed 42 --every 4
"""

import argparse
import math
import sys

from roundabout_sim.geometry import RoundaboutSpec, build_roundabout
from roundabout_sim.sim import run_simulation


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=6, help="number of vehicles")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--every", type=int, default=4,
                        help="print every k-th step (default 4 = 1 s)")
    args = parser.parse_args(argv)

    geometry = build_roundabout(RoundaboutSpec())
    result = run_simulation(args.n, args.seed, geometry)

    by_t = {}
    for row in result.rows:
        by_t.setdefault(row.t, []).append(row)
    for t in sorted(by_t):
        if t % args.every:
            continue
        print(f"t = {t * result.delta:6.2f} s")
        for row in by_t[t]:
            deg = math.degrees(row.theta)
            accel = "  --  " if row.accel is None else f"{row.accel:+6.1f}"
            flag = " [deadlock override]" if row.override else ""
            print(f"  veh {row.vid}: {row.status.name.lower():6s} "
                  f"r={row.r:6.2f} m  theta={deg:6.1f} deg  "
                  f"v={row.v:5.2f} m/s  a={accel}{flag}")

    print()
    if result.collision is not None:
        step_no, a, b = result.collision
        print(f"collision between {a} and {b} at t={step_no * result.delta:.2f} s")
    elif result.censored:
        print("run censored at the step cap")
    else:
        print("all vehicles exited")
    if math.isfinite(result.min_distance):
        print(f"closest approach: {result.min_distance:.2f} m")
    for vid in sorted(result.mission_steps):
        steps = result.mission_steps[vid]
        took = "-" if steps is None else f"{steps * result.delta:.2f} s"
        print(f"  veh {vid}: aggressiveness {result.true_w[vid]:.1f}, "
              f"mission time {took}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
