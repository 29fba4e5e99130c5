"""SVG figures.  Output is byte-stable: fixed hash salt, no date stamp."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .quantum import config_label  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "ionspec"
matplotlib.rcParams["svg.fonttype"] = "none"


def save_svg(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": "ionspec"})
    plt.close(fig)
    return path


def plot_scan(scan, path, fits=None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for k, lab in enumerate(scan.labels()):
        y, e = scan.populations[:, k], scan.errors[:, k]
        if np.any(e > 0):
            ax.errorbar(scan.freq_grid, y, e, fmt=".", ms=3, lw=0.5, label=lab)
        else:
            ax.plot(scan.freq_grid, y, lw=1, label=lab)
    for f in fits or []:
        ax.axvline(f, color="k", lw=0.5, ls=":")
    ax.set_xlabel("probe frequency (kHz)")
    ax.set_ylabel("population")
    ax.legend(fontsize=6, ncol=2)
    fig.tight_layout()
    return save_svg(fig, path)


def plot_couplings(truth, estimate, path, stderrs=None) -> Path:
    """|J| against separation for the reference and (optionally) the estimate."""
    n = truth.n_ions
    fig, ax = plt.subplots(figsize=(5, 3.5))
    pairs = truth.pairs()
    r = np.array([j - i for i, j in pairs])
    ax.plot(r - 0.08, np.abs(truth.pair_vector()), "ko", ms=4, label="truth")
    if estimate is not None:
        yerr = None if stderrs is None else np.asarray(stderrs)
        ax.errorbar(r + 0.08, np.abs(estimate.pair_vector()), yerr, fmt="s", ms=3, color="C0", label="estimate")
    ax.set_yscale("log")
    ax.set_xlabel("separation |i-j|")
    ax.set_ylabel("|J| (kHz)")
    ax.set_xticks(range(1, n))
    ax.legend(fontsize=7)
    fig.tight_layout()
    return save_svg(fig, path)


def plot_spectrum(report, path) -> Path:
    spec = report.spectrum
    n = spec.n_spins
    fig, ax = plt.subplots(figsize=(8, 4))
    x = np.arange(2**n)
    ax.hlines(report.exact, x - 0.4, x + 0.4, color="k", lw=1, label="exact")
    ok = ~np.isnan(spec.energies)
    ax.errorbar(x[ok], spec.energies[ok], spec.stderrs[ok], fmt="o", ms=3, color="C3", label="measured")
    ax.set_xticks(x)
    ax.set_xticklabels([config_label(c, n) for c in x], rotation=90, fontsize=6)
    ax.set_ylabel(f"energy above {config_label(spec.reference, n)} (kHz)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return save_svg(fig, path)


def plot_witness(report, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    rows = report.table
    x = np.arange(len(rows))
    ax.bar(x, [r.value for r in rows], yerr=[r.stderr for r in rows], color="C0", label="sampled")
    ax.plot(x, [r.value for r in report.exact_table], "k_", ms=14, label="exact")
    ax.plot(x, [r.min_possible for r in rows], "r_", ms=14, label="minimum")
    names = ["none"] + [",".join(str(i) for i in range(report.n_spins) if i not in r.subsystem) for r in rows[1:]]
    ax.set_xticks(x)
    ax.set_xticklabels(names, fontsize=7)
    ax.set_xlabel("traced spins")
    ax.set_ylabel("<W_ss>")
    ax.axhline(0, color="k", lw=0.5)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return save_svg(fig, path)


def plot_gapmap(gm, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    img = gm.rescaled().T
    b, f = gm.b0_grid, gm.freq_grid
    db = (b[1] - b[0]) if len(b) > 1 else 1.0
    df = (f[1] - f[0]) if len(f) > 1 else 1.0
    ax.imshow(img, origin="lower", aspect="auto", cmap="viridis",
              extent=[b[0] - db / 2, b[-1] + db / 2, f[0] - df / 2, f[-1] + df / 2])
    for k in range(1, min(gm.levels.shape[1], 40)):
        ax.plot(b, gm.levels[:, k], color="w", lw=0.3, alpha=0.6)
    ax.plot(b, gm.lowest_coupled, color="w", lw=2, label="lowest coupled")
    ax.plot(b, gm.ridge, "r.", ms=4, label="ridge")
    ax.set_ylim(f[0] - df / 2, f[-1] + df / 2)
    ax.set_xlabel("B0 (kHz)")
    ax.set_ylabel("probe frequency (kHz)")
    ax.legend(fontsize=7, loc="upper left")
    fig.tight_layout()
    return save_svg(fig, path)
