"""Rekey success rate against LiFi misalignment, plus gnuplot data.

    python scripts/angle_sweep.py --out out/sweep --jobs 4
"""

import argparse
import sys
from pathlib import Path

from lightguard.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--jobs", default="1")
    ap.add_argument("--seed", default="1")
    args = ap.parse_args()
    rc = main(["sweep", "--config", str(ROOT / "configs/sweep.toml"), "--out", args.out,
               "--jobs", args.jobs, "--seed", args.seed])
    if rc == 0:
        rc = main(["plotdata", "--in", args.out, "--out", args.out])
    sys.exit(rc)
