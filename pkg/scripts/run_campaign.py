#!/usr/bin/env python3
"""Run the default safety/speed campaign (4..8 vehicles x 200 seeded runs).

Thin wrapper over the installed CLI so the standard experiment is one
command; any extra arguments are forwarded, e.g.::

    python3 scripts/run_campaign.py --out results --traces --jobs 4
"""

import sys

from roundabout_sim.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
