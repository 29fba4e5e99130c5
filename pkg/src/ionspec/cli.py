"""Command-line front end: ``ionspec <verb> [--config FILE] [flags]``.

Every run writes its outputs plus ``manifest.json`` (resolved config,
version, output hashes) into ``--out``.  Passing that manifest back as
``--config`` reproduces the run byte for byte.

Exit codes: 0 success, 2 bad configuration, 3 physics or solver error,
4 missing input file.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .campaign import (
    collect_scans,
    probe_template,
    reconstruction_plans,
    scan_window,
    simulate_plans,
    simulate_probes,
    solve_reconstruction,
    spectrum_campaign,
    spectrum_probes,
    splittings_from_scans,
    witness_campaign,
)
from .chain import ChainError, ResonanceError, chain_couplings, validity_check
from .config import CampaignConfig, ConfigError, load_config
from .drive import UnreachableError, run_scan
from .gap import GapError, default_grids, map_gap
from .infer import RankError, exact_splittings, fit_power_law
from .io import read_scan, write_couplings, write_csv, write_json, write_manifest, write_scan
from .peaks import fit_lorentzian
from .plots import plot_couplings, plot_gapmap, plot_scan, plot_spectrum, plot_witness
from .quantum import DimensionError, SpinState, StepSizeError, config_index, config_label, flip, ising_diagonal

log = logging.getLogger("ionspec")

EXIT_OK, EXIT_CONFIG, EXIT_PHYSICS, EXIT_MISSING = 0, 2, 3, 4
MAX_RECONSTRUCT_SPINS = 12


class CampaignError(RuntimeError):
    """A campaign cannot be carried out as configured."""


# -------------------------------------------------------------------- verbs

def cmd_chain(cfg: CampaignConfig, out: Path) -> list[Path]:
    files = []
    report = {"n_ions": cfg.n_spins, "runs": []}
    mus = cfg.trap.detunings()
    for mu in mus:
        trap = cfg.trap.trap(cfg.n_spins, mu)
        modes, j = chain_couplings(trap)
        stem = out / ("couplings" if len(mus) == 1 else f"couplings_mu{mu:.4f}")
        files += write_couplings(stem, j)
        run = {"detuning_mu": mu, "file": stem.name, "mode_freqs_MHz": modes.mode_freqs,
               "positions": modes.positions}
        if cfg.n_spins == 1:
            warnings.warn("a single ion has no couplings; wrote an empty coupling file", stacklevel=2)
        if cfg.n_spins >= 4:
            j0, alpha, _ = fit_power_law(j)
            run.update(fit_j0=j0, fit_alpha=alpha)
            files.append(plot_couplings(j, None, stem.parent / (stem.name + ".svg")))
        v = validity_check(modes, trap)
        run["validity"] = {"ok": v.ok, "regime": v.regime, "detuning_in_eta_omega": v.detuning_in_eta_omega,
                           "flagged_modes": v.flagged_modes, "notes": v.notes}
        report["runs"].append(run)
    files.append(write_json(out / "chain_report.json", report))
    return files


def _scan_grid(cfg: CampaignConfig, initial: int, couplings) -> np.ndarray:
    s = cfg.scan
    if s.start is not None and s.stop is not None:
        count = int(math.floor((s.stop - s.start) / s.step + 1e-9)) + 1
        return s.start + s.step * np.arange(count)
    d = ising_diagonal(couplings)
    n = couplings.n_ions
    return scan_window([abs(d[flip(initial, i, n)] - d[initial]) for i in range(n)], s.step)


def cmd_scan(cfg: CampaignConfig, out: Path) -> list[Path]:
    j = cfg.coupling_matrix()
    n = j.n_ions
    initial = config_index(cfg.scan.initial) if cfg.scan.initial else 2**n - 1
    if cfg.scan.initial and len(cfg.scan.initial) != n:
        raise ConfigError(f"initial configuration {cfg.scan.initial!r} does not have {n} spins")
    grid = _scan_grid(cfg, initial, j)
    tpl = probe_template(cfg.probe.amplitude, cfg.probe.duration)
    scan = run_scan(SpinState.from_config(n, initial), j, tpl, grid, measurement=cfg.model(),
                    seed=cfg.seed, label=f"scan-{config_label(initial, n)}", workers=cfg.workers,
                    dt=cfg.dt, correct=cfg.measurement.correct)
    files = write_scan(out / "scan", scan)
    files.append(plot_scan(scan, out / "scan.svg"))
    return files


def _distinct(fits):
    """Drop fits that converged onto a peak already found from another seed."""
    kept = []
    for f in sorted(fits, key=lambda f: (not f.accepted, -f.r_squared)):
        if all(abs(f.x0 - k.x0) > 0.25 * max(k.w, 1e-9) for k in kept):
            kept.append(f)
    return sorted(kept, key=lambda f: f.x0)


def cmd_fit(cfg: CampaignConfig, out: Path) -> list[Path]:
    if not cfg.scan.input:
        raise ConfigError("fit needs a scan file: set [scan] input or pass --input")
    scan = read_scan(cfg.scan.input)
    rows, doc = [], []
    for k, state in enumerate(scan.tracked_states):
        x, y, e = scan.column(state)
        noiseless = not np.any(e > 0)
        fits = _distinct(fit_lorentzian(x, y, None if noiseless else e))
        lab = config_label(state, scan.n_spins)
        doc.append({"state": lab, "fits": [f.to_dict() for f in fits]})
        for f in fits:
            rows.append([lab, f.accepted, f.x0, f.stderr_x0, f.w, f.stderr_w, f.a, f.o, f.r_squared,
                         ";".join(f.rejection_reasons)])
    header = ["state", "accepted", "x0_kHz", "stderr_x0", "w_kHz", "stderr_w", "A", "O", "r_squared", "reasons"]
    files = [write_csv(out / "fits.csv", header, rows), write_json(out / "fits.json", doc)]
    best = [r[2] for r in rows if r[1]]
    files.append(plot_scan(scan, out / "fits.svg", best))
    return files


def cmd_reconstruct(cfg: CampaignConfig, out: Path) -> list[Path]:
    j = cfg.coupling_matrix()
    n = j.n_ions
    if n > MAX_RECONSTRUCT_SPINS:
        raise ConfigError(f"reconstruct supports N <= {MAX_RECONSTRUCT_SPINS}, got {n}")
    rc = cfg.reconstruct
    plans = reconstruction_plans(j, rc.symmetric)
    files = []
    if rc.scans_dir:
        scans = []
        for p in plans:
            path = Path(rc.scans_dir) / f"{p.label}.csv"
            if not path.exists():
                raise FileNotFoundError(f"missing scan file: {path}")
            scans.append(read_scan(path))
        sps = splittings_from_scans(scans)
        mode = "files"
    elif rc.spectrometer == "exact":
        if not cfg.measurement.noiseless:
            raise ConfigError("the exact spectrometer is noiseless; set noiseless = true")
        sps = [s for p in plans for src, tr in p.branches for s in exact_splittings(j, src, tr)]
        mode = "exact"
    else:
        tpl = probe_template(cfg.probe.amplitude, cfg.probe.duration)
        probs = simulate_plans(plans, j, tpl, cfg.workers)
        scans = collect_scans(plans, probs, j, cfg.model(), cfg.seed, tpl, cfg.measurement.correct)
        for p, sc in zip(plans, scans):
            files += write_scan(out / "scans" / p.label, sc)
        sps = splittings_from_scans(scans)
        mode = "simulated"
    report = solve_reconstruction(j, sps, len(plans), mode, rc.symmetric, rc.covariance)
    res = report.result
    files += write_couplings(out / "truth", j)
    files += write_couplings(out / "estimate", res.values, res.stderrs)
    z = report.z_scores
    rows = [[i, jj, t, e, s, (float(zz) if np.isfinite(zz) else "inf")]
            for (i, jj), t, e, s, zz in zip(j.pairs(), j.pair_vector(), res.values.pair_vector(), res.stderrs, z)]
    files.append(write_csv(out / "pairs.csv", ["i", "j", "truth_kHz", "estimate_kHz", "stderr_kHz", "z"], rows))
    files.append(write_csv(out / "splittings.csv", ["initial", "final", "delta_e_kHz", "sigma_kHz"],
                           [[config_label(s.initial, n), config_label(s.final, n), s.delta_e, s.sigma] for s in sps]))
    files.append(write_json(out / "reconstruct_report.json", report.to_dict()))
    if n >= 2:
        files.append(plot_couplings(j, res.values, out / "reconstruct.svg", res.stderrs))
    log.info("within 1 sigma: %.3f  max |error| %.3g kHz", report.within_one_sigma, report.max_error)
    return files


def cmd_spectrum(cfg: CampaignConfig, out: Path) -> list[Path]:
    j = cfg.coupling_matrix()
    sp = cfg.spectrum
    if cfg.measurement.noiseless:
        report = spectrum_campaign(j, None, preparation=sp.preparation, spectrometer="exact")
    else:
        probes = spectrum_probes(j, sp.preparation, probe_template(cfg.probe.amplitude, cfg.probe.duration),
                                 extrapolate=sp.extrapolate)
        simulate_probes(probes, j, cfg.workers)
        report = spectrum_campaign(j, cfg.model(), cfg.seed, probes=probes, correct=cfg.measurement.correct)
    doc = report.to_dict()
    rows = [[lv["config"], lv["energy"], lv["stderr"], lv["exact"], lv["z"]] for lv in doc["levels"]]
    files = [write_csv(out / "levels.csv", ["config", "energy_kHz", "stderr_kHz", "exact_kHz", "z"],
                       [[("" if v is None else v) for v in r] for r in rows]),
             write_json(out / "spectrum.json", doc),
             plot_spectrum(report, out / "spectrum.svg")]
    return files


def cmd_witness(cfg: CampaignConfig, out: Path) -> list[Path]:
    j = cfg.coupling_matrix()
    report = witness_campaign(j, cfg.model(), cfg.seed, cfg.witness.preparation,
                              corrected=cfg.witness.corrected)
    n = report.n_spins
    rows = []
    for r, ex in zip(report.table, report.exact_table):
        traced = [i for i in range(n) if i not in r.subsystem]
        rows.append([" ".join(map(str, traced)) or "none", " ".join(map(str, r.subsystem)), r.value, r.stderr,
                     ex.value, r.n_subsystem, r.min_possible])
    header = ["traced", "kept", "value", "stderr", "exact", "n_subsystem", "min_possible"]
    return [write_csv(out / "witness_table.csv", header, rows),
            write_json(out / "witness.json", report.to_dict()),
            plot_witness(report, out / "witness.svg")]


def cmd_gapmap(cfg: CampaignConfig, out: Path) -> list[Path]:
    j = cfg.coupling_matrix()
    g = cfg.gapmap
    b0, freq = default_grids(j, g.n_b0, g.n_freq, g.b0_max, g.convention)
    gm = map_gap(j, b0, freq, cfg.probe.amplitude, cfg.probe.duration, switch=g.switch, phi=g.phi,
                 workers=cfg.workers, convention=g.convention)
    rows = [[b, f, p] for b, col in zip(gm.b0_grid, gm.populations) for f, p in zip(gm.freq_grid, col)]
    step = float(freq[1] - freq[0]) if len(freq) > 1 else math.nan
    doc = {
        "mean_J": gm.mean_j,
        "delta": gm.delta, "delta_b0": gm.delta_b0,
        "measured_delta": gm.measured_delta, "measured_delta_b0": gm.measured_delta_b0,
        "freq_step": step,
        "columns": [{"b0": b, "protocol": p, "axis": a, "lowest_coupled": c, "ridge": r,
                     "deviation_steps": abs(r - c) / step if step == step else None,
                     "probe_amplitude": amp, "fidelity": gm.fidelities.get(i)}
                    for i, (b, p, a, c, r, amp) in enumerate(zip(gm.b0_grid, gm.protocols, gm.measurement_axes,
                                                                  gm.lowest_coupled, gm.ridge, gm.amplitudes))],
        "warnings": {str(k): v for k, v in gm.warnings.items()},
    }
    return [write_csv(out / "gapmap.csv", ["b0_kHz", "freq_kHz", "population"], rows),
            write_json(out / "gapmap.json", doc),
            plot_gapmap(gm, out / "gapmap.svg")]


COMMANDS = {
    "chain": cmd_chain,
    "scan": cmd_scan,
    "fit": cmd_fit,
    "reconstruct": cmd_reconstruct,
    "spectrum": cmd_spectrum,
    "witness": cmd_witness,
    "gapmap": cmd_gapmap,
}


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config or a manifest.json from a previous run")
    common.add_argument("--seed", type=int, help="global seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--noiseless", action="store_true", default=None, help="exact populations, no shot noise")
    common.add_argument("--repetitions", type=int, help="shots per setting")
    common.add_argument("--workers", type=int, help="worker threads")
    common.add_argument("--n", type=int, dest="n_ions", help="number of spins")
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="ionspec", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=f"{name} campaign")
        if name == "fit":
            sp.add_argument("--input", help="scan CSV to fit")
        if name == "reconstruct":
            sp.add_argument("--scans", help="directory of previously written scan CSVs")
    return p


def resolve_config(args) -> CampaignConfig:
    cfg = load_config(args.config) if args.config else CampaignConfig()
    cfg.kind = args.verb
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.noiseless:
        cfg.measurement.noiseless = True
    if args.repetitions is not None:
        cfg.measurement.repetitions = args.repetitions
    if args.workers is not None:
        cfg.workers = args.workers
    if args.n_ions is not None:
        cfg.trap.n_ions = args.n_ions
    if getattr(args, "input", None):
        cfg.scan.input = args.input
    if getattr(args, "scans", None):
        cfg.reconstruct.scans_dir = args.scans
    return cfg.resolved()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        files = COMMANDS[cfg.kind](cfg, out)
        write_manifest(out, cfg.to_dict(), files, __version__, [cfg.kind])
    except FileNotFoundError as exc:
        print(f"ionspec: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, TypeError) as exc:
        print(f"ionspec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResonanceError, ChainError, RankError, UnreachableError, StepSizeError, GapError,
            DimensionError, CampaignError, ValueError) as exc:
        print(f"ionspec: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    print(f"ionspec {cfg.kind}: wrote {len(files) + 1} files to {out}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
