"""Full N=5 level spectrum from a simulated campaign, over many seeds."""
import argparse
import json
import time

import numpy as np

from ionspec.campaign import simulate_probes, spectrum_campaign, spectrum_probes
from ionspec.chain import TrapConfig, chain_couplings
from ionspec.measure import MeasurementModel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--repetitions", type=int, default=1000)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--out")
    args = ap.parse_args()

    t0 = time.perf_counter()
    j = chain_couplings(TrapConfig(args.n, 4.8, 1.0))[1]
    probes = simulate_probes(spectrum_probes(j), j, args.workers)
    results = []
    for seed in range(args.seeds):
        rep = spectrum_campaign(j, MeasurementModel(args.repetitions, 0.02, 0.05, seed), seed, probes=probes)
        z = np.abs(rep.z_scores)
        z = z[np.isfinite(z)]
        results.append({"seed": seed, "within_3sigma": rep.within(3.0), "max_abs_z": float(z.max())})
        print(f"seed {seed:2d}: within 3 sigma {rep.within(3.0):.3f}  max |z| {z.max():.2f}")
    passing = sum(r["within_3sigma"] == 1.0 for r in results)
    print(f"all 32 levels within 3 sigma for {passing}/{args.seeds} seeds ({time.perf_counter() - t0:.0f} s)")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"results": results, "passing_seeds": passing}, fh, indent=2)


if __name__ == "__main__":
    main()
