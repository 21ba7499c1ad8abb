"""Aligned and misaligned throughput/latency traces side by side.

    python scripts/traces.py --out out/traces
"""

import argparse
import json
import sys
from pathlib import Path

from lightguard.cli import main

ROOT = Path(__file__).resolve().parent.parent
KEYS = ("rekeys_attempted", "rekeys_succeeded", "total_decrypt_failures", "downtime_ms",
        "mean_throughput", "mean_latency")

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/traces")
    ap.add_argument("--seed", default="1")
    args = ap.parse_args()
    rows = {}
    for name in ("aligned", "misaligned"):
        out = Path(args.out) / name
        rc = main(["trace", "--config", str(ROOT / f"configs/trace_{name}.toml"), "--out", str(out),
                   "--seed", args.seed])
        if rc:
            sys.exit(rc)
        main(["plotdata", "--in", str(out), "--out", str(out)])
        rows[name] = json.loads((out / "trace_summary.json").read_text())
    print(f"\n{'':24s}{'aligned':>14s}{'misaligned':>14s}")
    for k in KEYS:
        print(f"{k:24s}{rows['aligned'][k]:>14}{rows['misaligned'][k]:>14}")
