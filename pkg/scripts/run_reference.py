#!/usr/bin/env python3
"""Run the full reference experiment set into ./out/reference.

Reproduces, end to end: the nominal trajectories and open-loop covariance
envelopes, the precision heatmaps for s_max in {450, 750, 1200} with and
without the step-10 station outage, the s_max sweep table, and a 2000-trial
Monte-Carlo check of one optimal schedule.
"""
import sys
from pathlib import Path

from sparse_sensing.cli import main

HERE = Path(__file__).resolve().parent
OUT = HERE.parent / "out" / "reference"


def run(*argv) -> int:
    print(f"$ sparse-sensing {' '.join(argv)}")
    code = main(list(argv))
    print(f"  -> exit {code}")
    return code


if __name__ == "__main__":
    conf = str(HERE / "reference.conf")
    blocked = str(HERE / "reference_blocked.conf")
    codes = [
        run("simulate", "--config", conf, "--out", str(OUT / "simulate")),
        run("optimize", "--config", conf, "--out", str(OUT / "optimize")),
        # the blocked run exits 2: the 450 case is infeasible by design
        run("optimize", "--config", blocked, "--out", str(OUT / "optimize_blocked")),
        run("sweep", "--config", conf, "--out", str(OUT / "sweep")),
        run("validate", "--config", conf, "--s-max", "750", "--trials", "2000",
            "--out", str(OUT / "validate")),
    ]
    expected = [0, 0, 2, 0, 0]
    if codes != expected:
        print(f"unexpected exit codes: {codes} (expected {expected})")
        sys.exit(1)
    print(f"all outputs under {OUT}")
