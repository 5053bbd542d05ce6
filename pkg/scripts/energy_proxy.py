"""Energy proxy of the dual-accumulator MAC relative to an always-wide MAC.

For each dot-product length, averages the proxy ratio (MGS / baseline) over
random streams.  The fixed cost of the final merge makes short dot products
dearer with MGS; the ratio falls below one once the saved wide adds pay for
it.
"""
from __future__ import annotations

import argparse

import numpy as np

from mgs.data import activation_dist, gaussian_fp8, weight_dist
from mgs.dmac import (CostModel, energy_proxy, simulate_fp8_dmac, simulate_fp8_mac,
                      simulate_int_dmac, simulate_int_mac)
from mgs.parallel import stream_rng


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--streams", type=int, default=200)
    ap.add_argument("--narrow-bits", type=int, default=12)
    ap.add_argument("--wide-add", type=float, default=4.0, help="wide add cost in narrow-add units")
    ap.add_argument("--lengths", default="1,4,16,64,256,1024")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    model = CostModel(narrow_add=1.0, wide_add=args.wide_add)
    wd, xd = weight_dist(5), activation_dist(7)
    print(f"{'length':>6} {'int ratio':>10} {'fp8 ratio':>10} {'fp8 skip ratio':>15}")
    for i, n in enumerate(int(v) for v in args.lengths.split(",")):
        ri, rf, rs = [], [], []
        for t in range(args.streams):
            rng = stream_rng(args.seed, i * args.streams + t)
            w, x = wd.sample(rng, n), xd.sample(rng, n)
            mgs = simulate_int_dmac(w, x, args.narrow_bits, oversize="bypass")[1]
            ri.append(energy_proxy(mgs, model) / energy_proxy(simulate_int_mac(w, x)[1], model))
            w, x = gaussian_fp8(rng, n), gaussian_fp8(rng, n)
            base = energy_proxy(simulate_fp8_mac(w, x)[1], model)
            rf.append(energy_proxy(simulate_fp8_dmac(w, x)[1], model) / base)
            rs.append(energy_proxy(simulate_fp8_dmac(w, x, skipping=True)[1], model) / base)
        print(f"{n:>6} {np.mean(ri):10.3f} {np.mean(rf):10.3f} {np.mean(rs):15.3f}")


if __name__ == "__main__":
    main()
