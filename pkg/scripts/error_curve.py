"""Relative error of FP8 dot-product summation strategies versus length.

Prints mean and median percent error per strategy as a length-by-strategy
table and optionally writes the raw CSV.

    python scripts/error_curve.py --trials 200 --out error_curve.csv
"""
from __future__ import annotations

import argparse
import csv
import io

from mgs.experiments import ExperimentConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lengths", default="50,100,200,500,1000,2000,4000")
    ap.add_argument("--skipping", action="store_true")
    ap.add_argument("--out")
    args = ap.parse_args()
    text = run(ExperimentConfig.from_mapping("error-curve", {
        "trials": args.trials, "seed": args.seed, "lengths": args.lengths,
        "skipping": args.skipping}))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    rows = list(csv.DictReader(io.StringIO(text)))
    strategies = sorted({r["strategy"] for r in rows})
    lengths = sorted({int(r["length"]) for r in rows})
    cell = {(r["strategy"], int(r["length"])): r for r in rows}
    print(f"{'length':>7}  " + "  ".join(f"{s:>22}" for s in strategies))
    for L in lengths:
        parts = []
        for s in strategies:
            r = cell[s, L]
            parts.append(f"{float(r['mean_error_pct']):9.1f} / {float(r['median_error_pct']):9.1f}")
        print(f"{L:>7}  " + "  ".join(f"{p:>22}" for p in parts))
    print("cells are mean / median percent error")


if __name__ == "__main__":
    main()
