"""Simulate every shipped config and print a one-line summary per run.

usage: python scripts/run_configs.py [--out runs] [--only NAME ...]
"""

import argparse
import json
import time
from pathlib import Path

from aggrekit import cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(ROOT / "runs"))
    ap.add_argument("--only", nargs="*")
    args = ap.parse_args()
    for cfg in sorted((ROOT / "configs").glob("*.json")):
        name = cfg.stem
        if args.only and name not in args.only:
            continue
        if "sweep" in json.loads(cfg.read_text()):
            continue
        out = Path(args.out) / name
        t0 = time.perf_counter()
        code = cli.main(["simulate", "--config", str(cfg), "--out", str(out)])
        secs = time.perf_counter() - t0
        v = json.loads((out / "verdict.json").read_text())
        extra = f"trigger={v['trigger']} t_detect={v['t_detect']:.4g}" if v["trigger"] else f"t={v['t_final']:g}"
        print(f"{name:18s} exit={code:2d} {v['termination']:16s} {extra:32s} "
              f"drift={v['mass_drift']:.1e} {secs:6.1f}s")


if __name__ == "__main__":
    main()
