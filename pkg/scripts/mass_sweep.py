"""Empirical mass-fate curve for the 2D Newtonian kernel.

Runs a sweep over M / (8 pi) and prints the bracket (largest Completed,
smallest BlowupDetected) next to the virial threshold 8 pi.

usage: python scripts/mass_sweep.py [--factors 0.5 0.75 ...] [--t-end 0.5] [--jobs N]
"""

import argparse
import json
import math
import tempfile
from pathlib import Path

from aggrekit import cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--factors", type=float, nargs="+", default=[0.5, 0.75, 0.9, 1.1, 1.25, 1.5, 2.0])
    ap.add_argument("--t-end", type=float, default=0.5)
    ap.add_argument("--jobs", type=int)
    ap.add_argument("--out", default=str(ROOT / "runs" / "mass_sweep"))
    args = ap.parse_args()
    doc = json.loads((ROOT / "configs" / "sweep_newton2d.json").read_text())
    doc["time"]["t_end"] = args.t_end
    doc["sweep"]["values"] = [f * 8 * math.pi for f in args.factors]
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "sweep.json"
        cfg.write_text(json.dumps(doc))
        argv = ["sweep", "--config", str(cfg), "--out", args.out, "--no-plot"]
        if args.jobs:
            argv += ["--jobs", str(args.jobs)]
        cli.main(argv)
    summary = json.loads((Path(args.out) / "summary.json").read_text())
    for f, row in zip(args.factors, summary["rows"]):
        td = row["t_detect"]
        print(f"M = {f:5.2f} x 8pi  {row['termination']:16s} " + (f"t_detect={td:.4g}" if td else ""))
    b = summary["bracket"]
    fmt = lambda m: "none" if m is None else f"{m / (8 * math.pi):.3f} x 8pi"
    print(f"bracket: largest completed {fmt(b['largest_completed'])}, smallest blow-up {fmt(b['smallest_blowup'])}")


if __name__ == "__main__":
    main()
