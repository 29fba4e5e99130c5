"""How often the four fit-rejection criteria accept synthetic pathological scans."""
import argparse
from collections import Counter

import numpy as np

from ionspec.peaks import best_fit, fit_lorentzian, lorentzian


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--realizations", type=int, default=200)
    ap.add_argument("--noise", type=float, default=0.01)
    ap.add_argument("--step", type=float, default=0.025)
    args = ap.parse_args()

    x = np.arange(2.0, 4.0, args.step)
    s = args.noise

    def spike(rng):
        y = 0.02 + rng.normal(0, s, x.size)
        y[x.size // 2] += 0.5
        return y

    cases = {
        "flat": lambda rng: 0.02 + rng.normal(0, s, x.size),
        "flat-binomial": lambda rng: rng.binomial(1000, 0.02, x.size) / 1000,
        "spike": spike,
        "sub-snr bump": lambda rng: lorentzian(x, 3.0, 0.15, s, 0.02) + rng.normal(0, s, x.size),
        "true peak": lambda rng: lorentzian(x, 3.0, 0.15, 0.5, 0.02) + rng.normal(0, s, x.size),
    }
    for name, make in cases.items():
        accepted = 0
        reasons = Counter()
        for k in range(args.realizations):
            y = make(np.random.default_rng(k))
            err = np.full(x.size, s) if name != "flat-binomial" else np.sqrt(np.clip(y * (1 - y), 1e-6, None) / 1000)
            fits = fit_lorentzian(x, y, err)
            if best_fit(fits) is not None:
                accepted += 1
            else:
                reasons.update(fits[0].rejection_reasons if fits else ["no candidate"])
        print(f"{name:>14}: accepted {accepted:4d}/{args.realizations}  rejections {dict(reasons)}")


if __name__ == "__main__":
    main()
