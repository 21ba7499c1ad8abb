"""Randomized drop/duplicate/delay/corrupt schedules on commit-phase messages.

Each schedule gets a fresh testbed: bootstrap, then one rekey under faults.
The commit must either land on both ends or leave both on the old key, with no
decrypt failures either way.

    python scripts/commit_faults.py --runs 10000
"""

import argparse
import collections
import sys
import time

from lightguard.experiments import run_commit_faults

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    t0 = time.perf_counter()
    trials = run_commit_faults(args.runs, args.seed)
    elapsed = time.perf_counter() - t0
    outcomes = collections.Counter("committed" if t.rekey_success else (t.reason or "no-rekey") for t in trials)
    bad = [t for t in trials if not t.ok]
    print(f"{len(trials)} schedules in {elapsed:.1f} s")
    for k, v in sorted(outcomes.items()):
        print(f"  {k:20s} {v}")
    print(f"bad outcomes: {len(bad)}")
    for t in bad[:20]:
        print(f"  {t}")
    sys.exit(1 if bad else 0)
