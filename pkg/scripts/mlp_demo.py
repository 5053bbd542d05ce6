"""Synthetic MLP inference with narrow accumulators.

Generates the seeded checkpoint (unless it already exists) and sweeps the
narrow accumulator width, printing top-1 agreement with the exactly
accumulated quantized network for each strategy.
"""
from __future__ import annotations

import argparse
import csv
import io
import os

from mgs.experiments import ExperimentConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="mlp_model")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--widths", default="10,12,14,16")
    ap.add_argument("--strategies", default="wide,mgs,clip,wraparound,pairwise,sorted-pairing,ags")
    args = ap.parse_args()
    if not os.path.isdir(args.model):
        run(ExperimentConfig.from_mapping("make-mlp", {"model": args.model, "seed": args.seed}))
    print(f"{'bits':>4} {'strategy':>15} {'top1':>6} {'labels':>6} {'flushes':>8} {'clips':>8}")
    for bits in args.widths.split(","):
        text = run(ExperimentConfig.from_mapping("mlp-infer", {
            "model": args.model, "narrow_bits": bits, "strategies": args.strategies}))
        for r in csv.DictReader(io.StringIO(text)):
            print(f"{bits:>4} {r['strategy']:>15} {float(r['top1_agreement']):6.3f}"
                  f" {float(r['label_accuracy']):6.3f} {float(r['mean_flushes']):8.2f}"
                  f" {float(r['mean_clip_events']):8.2f}")


if __name__ == "__main__":
    main()
