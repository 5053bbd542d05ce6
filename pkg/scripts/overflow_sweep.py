"""Overflow probability of a k-term integer dot product versus accumulator width.

Compares the normal-approximation estimate with Monte Carlo for 5-bit
weights and 7-bit activations, and reports the smallest width whose
estimated overflow probability drops below ``--target`` for each k.
"""
from __future__ import annotations

import argparse
import csv
import io

from mgs.experiments import ExperimentConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ks", default="1,2,5,10,20,50,100")
    ap.add_argument("--target", type=float, default=1e-3)
    ap.add_argument("--out")
    args = ap.parse_args()
    text = run(ExperimentConfig.from_mapping("overflow-prob", {
        "trials": args.trials, "seed": args.seed, "ks": args.ks, "acc_bits": "6:20"}))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    rows = list(csv.DictReader(io.StringIO(text)))
    for k in sorted({int(r["k"]) for r in rows}):
        mine = [r for r in rows if int(r["k"]) == k]
        need = next((int(r["acc_bits"]) for r in mine if float(r["clt_prob"]) < args.target), None)
        at10 = next(r for r in mine if int(r["acc_bits"]) == 10)
        print(f"k={k:4d}  width for p<{args.target:g}: {need}   "
              f"p(10 bits) clt={float(at10['clt_prob']):.4f} mc={float(at10['mc_prob']):.4f}")


if __name__ == "__main__":
    main()
