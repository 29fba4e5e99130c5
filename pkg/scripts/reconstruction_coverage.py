"""Fraction of couplings within 1 sigma of truth over many shot-noise seeds.

Simulates the N+1 scan campaign once, then resamples shot noise per seed.
"""
import argparse
import json
import time

import numpy as np

from ionspec.campaign import reconstruct, reconstruction_plans, simulate_plans
from ionspec.chain import TrapConfig, chain_couplings
from ionspec.measure import MeasurementModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--repetitions", type=int, default=1000)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out", help="write a JSON summary here")
    args = ap.parse_args()

    t0 = time.perf_counter()
    j = chain_couplings(TrapConfig(args.n, 4.8, 1.0))[1]
    exact = reconstruct(j, spectrometer="exact")
    probs = simulate_plans(reconstruction_plans(j), j, workers=args.workers)
    fractions, max_err = [], []
    for seed in range(args.seeds):
        rep = reconstruct(j, MeasurementModel(args.repetitions, 0.02, 0.05, seed), seed, probabilities=probs)
        fractions.append(rep.within_one_sigma)
        max_err.append(rep.max_error)
        print(f"seed {seed:2d}: within 1 sigma {rep.within_one_sigma:.3f}  max |error| {rep.max_error:.4f} kHz")
    summary = {
        "n_ions": args.n,
        "rows": len(exact.splittings),
        "exact_max_error": exact.max_error,
        "fractions": fractions,
        "mean_fraction": float(np.mean(fractions)),
        "max_errors": max_err,
        "seconds": time.perf_counter() - t0,
    }
    print(f"exact spectrometer max error {exact.max_error:.2e} kHz over {summary['rows']} rows")
    print(f"mean within 1 sigma {summary['mean_fraction']:.3f}  ({summary['seconds']:.0f} s)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=2)


if __name__ == "__main__":
    main()
