"""Fitted power-law exponent of chain couplings versus beat-note detuning."""
import argparse

import numpy as np

from ionspec.chain import TrapConfig, chain_couplings
from ionspec.infer import fit_power_law


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--transverse", type=float, default=4.8, help="COM frequency, MHz")
    ap.add_argument("--axial", type=float, default=1.0, help="MHz")
    args = ap.parse_args()

    for mu in np.concatenate([args.transverse + np.geomspace(0.005, 1.0, 8), [10.0, 30.0, 100.0, 1000.0]]):
        j = chain_couplings(TrapConfig(args.n, args.transverse, args.axial, detuning_mu=float(mu)))[1]
        j0, alpha, _ = fit_power_law(j)
        print(f"mu {mu:8.3f} MHz   J0 {j0:9.4f} kHz   alpha {alpha:5.3f}")


if __name__ == "__main__":
    main()
