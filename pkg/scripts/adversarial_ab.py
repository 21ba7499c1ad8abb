"""Eavesdropper A/B: the same seeds and taps in LightGuard and in-band baseline mode.

    python scripts/adversarial_ab.py --out out/adversarial
"""

import argparse
import sys
from pathlib import Path

from lightguard.cli import main

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/adversarial")
    ap.add_argument("--seed", default="1")
    args = ap.parse_args()
    sys.exit(main(["adversarial", "--config", str(ROOT / "configs/adversarial.toml"), "--out", args.out,
                   "--seed", args.seed]))
