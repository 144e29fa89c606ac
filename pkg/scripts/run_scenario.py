#!/usr/bin/env python
"""Run one simulation scenario file and print its report and verdict.

Example:
    python scripts/run_scenario.py scenarios/fault_containment.yaml
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from evidencepipe.simharness import run_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scenario", type=Path, help="scenario YAML file")
    parser.add_argument(
        "--workdir", type=Path, default=None,
        help="directory for the generated corpus and outputs"
        " (default: a fresh temporary directory)",
    )
    args = parser.parse_args()
    workdir = args.workdir or Path(tempfile.mkdtemp(prefix="scenario-"))
    result = run_scenario(args.scenario, workdir)
    sys.stdout.write(result.report.to_json())
    print(f"workdir: {workdir}")
    if result.failures:
        for failure in result.failures:
            print(f"assertion failed: {failure}", file=sys.stderr)
        return 1
    print(f"scenario {result.name}: all assertions passed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
