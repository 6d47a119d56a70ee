#!/usr/bin/env python3
"""Drive the full pipeline end to end on a synthetic dataset.

Usage::

    python3 scripts/run_pipeline.py --run out/demo --seed 7 [--skip-synth]

Each stage is a ``cyrisk`` subcommand invoked in-process; the script stops
at the first failing stage and reports its exit code.
"""

from __future__ import annotations

import argparse
import sys
import time

from cyrisk.cli import main as cyrisk_main


def run(argv: list[str]) -> None:
    label = argv[0]
    started = time.perf_counter()
    code = cyrisk_main(argv)
    elapsed = time.perf_counter() - started
    if code != 0:
        print(f"stage {label} failed with exit code {code}", file=sys.stderr)
        raise SystemExit(code)
    print(f"  {label:<8} {elapsed:6.1f}s")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--run", required=True, help="run directory")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--skip-synth", action="store_true",
                        help="reuse an existing data/ directory")
    args = parser.parse_args()

    seed = str(args.seed)
    base = ["--run", args.run]
    print(f"pipeline -> {args.run} (seed {seed})")
    started = time.perf_counter()
    if not args.skip_synth:
        run(["synth", *base, "--seed", seed])
    run(["prep", *base])
    run(["embed", *base, "--seed", seed])
    run(["cluster", *base, "--seed", seed])
    run(["score", *base])
    run(["sort", *base])
    run(["alphas", *base])
    run(["fm", *base])
    run(["grs", *base])
    run(["bgrs", *base, "--with-cyber"])
    run(["event", *base])
    run(["welch", *base])
    run(["report", *base])
    print(f"done in {time.perf_counter() - started:.1f}s -> {args.run}/report.txt")


if __name__ == "__main__":
    main()
