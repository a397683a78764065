#!/usr/bin/env python3
"""Solve-time comparison: parametrized controller versus the constrained baseline.

Both controllers walk the same scenario with identical weights and solver
options; per-tick solve times, iteration counts and statuses land in
timing.csv.
"""

import argparse
import json
from pathlib import Path

from payload_mpc import compare_timing
from payload_mpc.contact import ContactSurface
from payload_mpc.gait import GaitParameters
from payload_mpc.simulation import Scenario


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/benchmark")
    parser.add_argument("--duration", type=float, default=30.0)
    parser.add_argument("--steps", type=int, default=16)
    parser.add_argument("--runs", type=int, default=1)
    parser.add_argument("--shared-trace", action="store_true",
                        help="baseline re-solves the parametrized loop's exact instances")
    args = parser.parse_args()

    scenario = Scenario(
        duration=args.duration,
        surface=ContactSurface(-0.2, 0.2, -0.075, 0.075),
        gait=GaitParameters(number_of_steps=args.steps),
    )
    report = compare_timing(scenario, runs=args.runs, shared_trace=args.shared_trace)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "timing.csv")
    print(json.dumps(report.summary(), indent=2))


if __name__ == "__main__":
    main()
