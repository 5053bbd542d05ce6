"""Expected overflow-free summation length: Markov chain versus simulation."""
from __future__ import annotations

import argparse
import csv
import io

from mgs.experiments import ExperimentConfig, run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--acc-bits", default="8:12")
    args = ap.parse_args()
    text = run(ExperimentConfig.from_mapping("markov-validate", {
        "trials": args.trials, "seed": args.seed, "acc_bits": args.acc_bits}))
    print(f"{'bits':>4} {'chain':>10} {'simulated':>10} {'rel diff':>9} {'naive bits':>10}")
    for r in csv.DictReader(io.StringIO(text)):
        print(f"{r['acc_bits']:>4} {float(r['chain_length']):10.2f} {float(r['simulated_length']):10.2f}"
              f" {float(r['rel_diff']):9.2%} {r['naive_bits']:>10}")


if __name__ == "__main__":
    main()
