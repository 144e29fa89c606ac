#!/usr/bin/env python
"""Sweep mock-backend latency and measure sustained pipeline throughput.

Everything runs on the virtual clock, so a sweep finishes in seconds of
real time regardless of the simulated latencies.  The expected plateau is
min(rps, concurrency / latency) requests per second.

Example:
    python scripts/benchmark_throughput.py --concurrency 3 --rps 5
"""

from __future__ import annotations

import argparse
import tempfile
import time
from pathlib import Path

from evidencepipe.simharness import run_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--concurrency", type=int, default=3)
    parser.add_argument("--rps", type=float, default=5.0)
    parser.add_argument(
        "--latencies", type=float, nargs="+",
        default=[0.1, 0.25, 0.55, 0.8, 1.0, 1.5, 2.0],
    )
    parser.add_argument("--docs", type=int, default=4)
    parser.add_argument("--pages", type=int, default=200)
    args = parser.parse_args()

    print(f"{'latency (s)':>12} {'bound':>18} {'observed rps':>13} "
          f"{'high water':>11} {'real (s)':>9}")
    for latency in args.latencies:
        scenario = {
            "name": f"latency-{latency}",
            "corpus": {"docs": [
                {"count": args.docs, "pages": args.pages, "captions": 0}
            ]},
            "seed": 7,
            "config": {"concurrency": args.concurrency, "rps": args.rps},
            "latency": {"kind": "fixed", "seconds": latency},
        }
        with tempfile.TemporaryDirectory(prefix="bench-") as workdir:
            started = time.perf_counter()
            result = run_scenario(scenario, Path(workdir))
            elapsed = time.perf_counter() - started
        bound = min(args.rps, args.concurrency / latency)
        print(f"{latency:>12.2f} {bound:>18.3f} "
              f"{result.report.observed_rps:>13.3f} "
              f"{result.stats.in_flight_high_water:>11d} {elapsed:>9.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
