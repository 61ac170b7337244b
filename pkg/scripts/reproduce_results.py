#!/usr/bin/env python3
"""Reproduce the headline comparison run.

Runs the three memory treatments (unbiased, vanilla, none) at T=50
trials on the pinned master seed and writes every artifact, including
the manifest that makes the run replayable, to ./results by default.
Extra flags are passed through to the CLI, so for example

    python3 scripts/reproduce_results.py --out elsewhere --trials 10

overrides the destination and the trial count.
"""

from __future__ import annotations

import sys

from ranedge.cli import main

HEADLINE = [
    "run",
    "--scenario", "all",
    "--trials", "50",
    "--seed", "42",
    "--out", "results",
]

if __name__ == "__main__":
    # Flags given on the command line come later, so they win.
    sys.exit(main(HEADLINE + sys.argv[1:]))
