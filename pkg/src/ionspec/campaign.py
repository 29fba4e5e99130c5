"""Measurement campaigns built from the scan, fit and inference layers.

A campaign is a list of scan plans.  Each plan says which state the probe
scan starts from (after any preparation pulses), the frequency window, and
for every populated source configuration which one-flip neighbours are
tracked.  Noiseless readout distributions are simulated once per plan and
can be resampled for any number of seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import CouplingMatrix
from .drive import (
    DEFAULT_PROBE_AMPLITUDE,
    DEFAULT_PROBE_DURATION,
    DriveSchedule,
    plan_pulses,
    run_scan,
    scan_probabilities,
    sequential_pulses,
    w_manifold_fidelity,
    w_prep_schedule,
)
from .gap import prepare_ground_adiabatic
from .infer import (
    ReconstructedCouplings,
    Spectrum,
    assemble_spectrum,
    build_design_matrix,
    campaign_scans,
    design_row,
    exact_splittings,
    solve_couplings,
)
from .measure import MeasurementModel
from .peaks import Splitting, extract_splittings
from .quantum import SpinState, config_label, evolve, flip, ising_diagonal, mirror
from .witness import (
    WitnessResult,
    ideal_w_state,
    reduced_witness_table,
    witness_scan_phases,
    witness_value,
)

SCAN_STEP = 0.025  # kHz
SCAN_MARGIN = 0.75  # kHz beyond the outermost expected line
MIN_SPLITTING = 0.5  # kHz; slower lines are not resolvable with a 3 ms probe
PREP_AMPLITUDE = 0.05  # kHz, first pulse of two-pulse scans
EXACT_TOLERANCE = 1e-9  # kHz; "within 1 sigma" when sigma is zero


def scan_window(splittings, step: float = SCAN_STEP, margin: float = SCAN_MARGIN,
                floor: float = 0.0) -> np.ndarray:
    """Uniform probe grid covering every expected line with ``margin`` to spare."""
    s = np.asarray(list(splittings), dtype=float)
    lo = max(floor, float(s.min()) - margin)
    count = int(math.floor((float(s.max()) + margin - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


@dataclass
class ScanPlan:
    label: str
    prepared: SpinState
    branches: list[tuple[int, list[int]]]  # (source config, tracked neighbours)
    grid: np.ndarray
    preparation: list[DriveSchedule] = field(default_factory=list)

    def to_dict(self) -> dict:
        n = self.prepared.n_spins
        return {
            "label": self.label,
            "branches": [{"source": config_label(s, n), "tracked": [config_label(t, n) for t in ts]}
                         for s, ts in self.branches],
            "grid": {"start": float(self.grid[0]), "stop": float(self.grid[-1]), "points": len(self.grid)},
            "preparation": [p.to_dict() for p in self.preparation],
        }


def probe_template(amplitude: float = DEFAULT_PROBE_AMPLITUDE,
                   duration: float = DEFAULT_PROBE_DURATION) -> DriveSchedule:
    return DriveSchedule.probe(1.0, amplitude, duration)


def simulate_plans(plans: list[ScanPlan], couplings: CouplingMatrix, template: DriveSchedule | None = None,
                   workers: int = 1) -> list[np.ndarray]:
    """Noiseless readout distributions, one [freq, 2**N] array per plan.

    When the prepared state is a superposition its coherences add a term
    odd in the probe amplitude, set by the uncontrolled phase between
    preparation and probe.  Such plans are averaged over probe phases 0
    and pi, which removes it.
    """
    template = probe_template() if template is None else template
    out = []
    for p in plans:
        probs = scan_probabilities(p.prepared, couplings, template, p.grid, workers=workers)[0]
        if np.count_nonzero(p.prepared.probabilities > 1e-12) > 1:
            tone = template.tones[0]
            flipped = DriveSchedule.probe(tone.frequency, tone.amplitude, template.duration,
                                          template.b0, tone.phase + math.pi)
            probs = 0.5 * (probs + scan_probabilities(p.prepared, couplings, flipped, p.grid, workers=workers)[0])
        out.append(probs)
    return out


def collect_scans(plans: list[ScanPlan], probabilities: list[np.ndarray], couplings: CouplingMatrix,
                  model: MeasurementModel | None = None, seed: int | None = None,
                  template: DriveSchedule | None = None, correct: bool = False) -> list:
    """One ScanResult per (plan, branch), resampled from the noiseless distributions.

    Branches of one plan share the same shot record: they are different
    columns of a single experiment.
    """
    template = probe_template() if template is None else template
    out = []
    for plan, probs in zip(plans, probabilities):
        for source, tracked in plan.branches:
            out.append(run_scan(plan.prepared, couplings, template, plan.grid, measurement=model,
                                tracked=tracked, seed=seed, label=plan.label, probabilities=probs,
                                reference=source, correct=correct))
    return out


def splittings_from_scans(scans) -> list[Splitting]:
    return [sp for scan in scans for sp in extract_splittings(scan)]


def measure_plans(plans: list[ScanPlan], probabilities: list[np.ndarray], couplings: CouplingMatrix,
                  model: MeasurementModel | None = None, seed: int | None = None,
                  template: DriveSchedule | None = None, correct: bool = False) -> list[Splitting]:
    """Resample every plan and fit each tracked column."""
    return splittings_from_scans(collect_scans(plans, probabilities, couplings, model, seed, template, correct))


def _z_scores(estimate: np.ndarray, truth: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    err = estimate - truth
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, err / np.where(sigma > 0, sigma, 1.0),
                     np.where(np.abs(err) <= EXACT_TOLERANCE, 0.0, np.inf))
    return z


# ---------------------------------------------------------------- couplings

def reconstruction_plans(couplings: CouplingMatrix, symmetric: bool = False,
                         step: float = SCAN_STEP, margin: float = SCAN_MARGIN) -> list[ScanPlan]:
    """Polarized scan plus one scan per single-defect start (N+1, or ceil(N/2)+1).

    Defect scans skip the transition back to the polarized state, which the
    polarized scan already measured, leaving N**2 rows in total.
    """
    n = couplings.n_ions
    d = ising_diagonal(couplings)
    top = 2**n - 1
    plans = []
    for init in campaign_scans(n, symmetric):
        tracked = [flip(init, i, n) for i in range(n)]
        if init != top:
            tracked = [t for t in tracked if t != top]
        grid = scan_window([abs(d[t] - d[init]) for t in tracked], step, margin)
        plans.append(ScanPlan(f"scan-{config_label(init, n)}", SpinState.from_config(n, init),
                              [(init, tracked)], grid))
    return plans


def mirrored(splittings: list[Splitting]) -> list[Splitting]:
    """Add the mirror image of every splitting not measured directly."""
    have = {(s.initial, s.final) for s in splittings}
    out = list(splittings)
    for s in splittings:
        key = (mirror(s.initial, s.n_spins), mirror(s.final, s.n_spins))
        if key not in have:
            have.add(key)
            out.append(Splitting(key[0], key[1], s.n_spins, s.delta_e, s.sigma))
    return out


@dataclass
class ReconstructionReport:
    truth: CouplingMatrix
    result: ReconstructedCouplings
    splittings: list[Splitting]
    n_scans: int
    mode: str

    @property
    def z_scores(self) -> np.ndarray:
        return _z_scores(self.result.values.pair_vector(), self.truth.pair_vector(), self.result.stderrs)

    @property
    def within_one_sigma(self) -> float:
        return float(np.mean(np.abs(self.z_scores) <= 1.0))

    @property
    def max_error(self) -> float:
        return float(np.max(np.abs(self.result.values.pair_vector() - self.truth.pair_vector()), initial=0.0))

    def to_dict(self) -> dict:
        n = self.truth.n_ions
        pairs = self.truth.pairs()
        est = self.result.values.pair_vector()
        tru = self.truth.pair_vector()
        z = self.z_scores
        return {
            "mode": self.mode,
            "n_spins": n,
            "n_scans": self.n_scans,
            "n_rows": len(self.splittings),
            "within_one_sigma": self.within_one_sigma,
            "max_abs_error": self.max_error,
            "fit_j0": self.result.fit_j0,
            "fit_alpha": self.result.fit_alpha,
            "alpha_stderr": self.result.alpha_stderr,
            "sign_iterations": self.result.sign_iterations,
            "notes": list(self.result.notes),
            "pairs": [{"i": i, "j": j, "truth": float(t), "estimate": float(e), "stderr": float(s),
                       "z": None if not math.isfinite(zz) else float(zz)}
                      for (i, j), t, e, s, zz in zip(pairs, tru, est, self.result.stderrs, z)],
        }


def solve_reconstruction(couplings: CouplingMatrix, splittings: list[Splitting], n_scans: int,
                         mode: str, symmetric: bool = False, covariance: str = "scaled") -> ReconstructionReport:
    """Solve for the couplings and compare against the truth ``couplings``."""
    if symmetric:
        splittings = mirrored(splittings)
    system = build_design_matrix(splittings, couplings.n_ions)
    result = solve_couplings(system, covariance=covariance)
    return ReconstructionReport(couplings, result, splittings, n_scans, mode)


def reconstruct(couplings: CouplingMatrix, model: MeasurementModel | None = None, seed: int | None = None,
                symmetric: bool = False, spectrometer: str = "simulated",
                probabilities: list[np.ndarray] | None = None, workers: int = 1,
                correct: bool = False, covariance: str = "scaled",
                template: DriveSchedule | None = None) -> ReconstructionReport:
    """Run the N+1 scan campaign and solve for the couplings.

    ``spectrometer="exact"`` replaces every fitted line centre by the exact
    zero-field splitting (an ideal spectrometer); it requires ``model=None``.
    Otherwise scans are simulated (or taken from ``probabilities``),
    resampled with ``model`` when given, and fitted.
    """
    plans = reconstruction_plans(couplings, symmetric)
    if spectrometer == "exact":
        if model is not None:
            raise ValueError("the exact spectrometer has no shot noise; pass model=None")
        sps = []
        for p in plans:
            for source, tracked in p.branches:
                sps += exact_splittings(couplings, source, tracked)
    elif spectrometer == "simulated":
        if probabilities is None:
            probabilities = simulate_plans(plans, couplings, template, workers=workers)
        sps = measure_plans(plans, probabilities, couplings, model, seed, template, correct=correct)
    else:
        raise ValueError(f"unknown spectrometer {spectrometer!r}")
    return solve_reconstruction(couplings, sps, len(plans), spectrometer, symmetric, covariance)


# ----------------------------------------------------------------- spectrum

def _tracked(source: int, n: int, d: np.ndarray, skip, min_splitting: float) -> list[int]:
    out = []
    for i in range(n):
        t = flip(source, i, n)
        if t in skip or frozenset((source, t)) in skip:
            continue
        if abs(d[t] - d[source]) >= min_splitting:
            out.append(t)
    return out


def spectrum_plans(couplings: CouplingMatrix, preparation: str = "adiabatic",
                   min_splitting: float = MIN_SPLITTING, step: float = SCAN_STEP,
                   margin: float = SCAN_MARGIN, prep_amplitude: float = PREP_AMPLITUDE) -> list[ScanPlan]:
    """Single and two-pulse scans from |1..1>, |0..0> and the Neel pair.

    The Neel configurations (1010.. and 0101..) are the zero-field ground
    doublet of antiferromagnetic couplings; they are prepared together by
    an adiabatic ramp, or exactly with ``preparation="ideal"``.  Two-pulse
    scans first drive |1..1> or |0..0> resonantly into a single flip and
    then scan a second tone; a weak first pulse keeps it from leaking into
    nearby lines.  Lines below ``min_splitting`` are not tracked.
    """
    n = couplings.n_ions
    d = ising_diagonal(couplings)
    top = 2**n - 1
    neel = int("10" * (n // 2) + "1" * (n % 2), 2)
    neel_pair = sorted({neel, (top ^ neel)})
    seen: set = set()
    plans = []

    def add(label, prepared, sources, pulses=()):
        branches = []
        for s in sources:
            tr = _tracked(s, n, d, seen | set(sources), min_splitting)
            seen.update(frozenset((s, t)) for t in tr)
            if tr:
                branches.append((s, tr))
        if branches:
            lines = [abs(d[t] - d[s]) for s, ts in branches for t in ts]
            grid = scan_window(lines, step, margin, floor=0.5 * min_splitting)
            plans.append(ScanPlan(label, prepared, branches, grid, list(pulses)))

    for s in (top, 0):
        add(f"scan-{config_label(s, n)}", SpinState.from_config(n, s), [s])
    if preparation == "adiabatic":
        ground = prepare_ground_adiabatic(couplings, 0.0, convention="native").state
    elif preparation == "ideal":
        amps = np.zeros(2**n, dtype=complex)
        amps[neel_pair] = 1.0
        ground = SpinState.normalized(n, amps)
    else:
        raise ValueError(f"unknown preparation {preparation!r}")
    add("scan-neel", ground, neel_pair)
    for s in (top, 0):
        done = set()
        for i in range(n):
            m = flip(s, i, n)
            if m in done:
                continue
            pulses = [p.schedule for p in plan_pulses(s, m, couplings, prep_amplitude)]
            prepared = sequential_pulses(SpinState.from_config(n, s), couplings, pulses)
            sources = sorted({m, mirror(m, n)})
            done.update(sources)
            add(f"scan-{config_label(s, n)}-via-{config_label(m, n)}", prepared, sources, pulses)
    return plans


@dataclass
class SpectrumReport:
    spectrum: Spectrum
    exact: np.ndarray  # exact energies relative to the reference
    couplings: ReconstructedCouplings
    edges: list[tuple[int, int, float, float]]
    n_scans: int

    @property
    def z_scores(self) -> np.ndarray:
        return _z_scores(self.spectrum.energies, self.exact, self.spectrum.stderrs)

    def within(self, k: float = 3.0) -> float:
        z = self.z_scores
        return float(np.mean(np.abs(z) <= k))

    def to_dict(self) -> dict:
        n = self.spectrum.n_spins
        z = self.z_scores
        return {
            "n_spins": n,
            "reference": config_label(self.spectrum.reference, n),
            "n_scans": self.n_scans,
            "n_edges": len(self.edges),
            "unmeasurable": [config_label(c, n) for c in self.spectrum.unmeasurable],
            "inconsistent_edges": [[config_label(a, n), config_label(b, n)]
                                   for a, b in self.spectrum.inconsistent_edges],
            "within_3_sigma": self.within(3.0),
            "levels": [
                {"config": config_label(c, n), "index": c,
                 "energy": None if math.isnan(self.spectrum.energies[c]) else float(self.spectrum.energies[c]),
                 "stderr": None if math.isnan(self.spectrum.stderrs[c]) else float(self.spectrum.stderrs[c]),
                 "exact": float(self.exact[c]),
                 "z": None if not math.isfinite(z[c]) else float(z[c])}
                for c in range(2**n)
            ],
            "couplings": self.couplings.values.values.tolist(),
        }


def signed_edges(splittings: list[Splitting], estimate: CouplingMatrix) -> list[tuple[int, int, float, float]]:
    """Orient every measured magnitude with the sign predicted by ``estimate``."""
    pv = estimate.pair_vector()
    out = []
    for s in splittings:
        pred = design_row(s.initial, s.final, s.n_spins) @ pv
        out.append((s.initial, s.final, math.copysign(abs(s.delta_e), pred), s.sigma))
    return out


@dataclass
class ProbeSet:
    """One probe setting of a spectrum campaign with its plans and simulated scans."""

    template: DriveSchedule
    plans: list[ScanPlan]
    probabilities: list[np.ndarray] | None = None


def extrapolate_light_shift(strong: list[Splitting], weak: list[Splitting], ratio: float) -> list[Splitting]:
    """Zero-amplitude line centres from two probe strengths.

    The drive shifts each line by an amount quadratic in the probe
    amplitude, so with ``ratio`` = (B_strong / B_weak)**2 the unshifted
    centre is (ratio * x_weak - x_strong) / (ratio - 1).  Lines fitted at
    only one strength are dropped.
    """
    if ratio <= 1:
        raise ValueError("the strong probe must be stronger than the weak one")
    lookup = {(s.initial, s.final): s for s in strong}
    out = []
    for w in weak:
        s = lookup.get((w.initial, w.final))
        if s is None:
            continue
        x0 = (ratio * w.delta_e - s.delta_e) / (ratio - 1)
        sig = math.hypot(ratio * w.sigma, s.sigma) / (ratio - 1)
        out.append(Splitting(w.initial, w.final, w.n_spins, x0, sig))
    return out


def spectrum_probes(couplings: CouplingMatrix, preparation: str = "adiabatic",
                    template: DriveSchedule | None = None, step: float | None = None,
                    extrapolate: bool = True) -> list[ProbeSet]:
    """Probe settings of a spectrum campaign.

    With ``extrapolate`` the campaign is repeated at amplitude / sqrt(2)
    with the same duration, which halves the quadratic light shift.  The
    grid step defaults to 0.075 / duration.
    """
    template = probe_template() if template is None else template
    tone = template.tones[0]
    settings = [(tone.amplitude, template.duration, "")]
    if extrapolate:
        settings.append((tone.amplitude / math.sqrt(2), template.duration, "-weak"))
    out = []
    for amp, dur, tag in settings:
        tpl = probe_template(amp, dur)
        st = 0.075 / dur if step is None else step
        plans = spectrum_plans(couplings, preparation, step=st)
        for p in plans:
            p.label += tag
        out.append(ProbeSet(tpl, plans))
    return out


def simulate_probes(probes: list[ProbeSet], couplings: CouplingMatrix, workers: int = 1) -> list[ProbeSet]:
    for ps in probes:
        if ps.probabilities is None:
            ps.probabilities = simulate_plans(ps.plans, couplings, ps.template, workers)
    return probes


def spectrum_campaign(couplings: CouplingMatrix, model: MeasurementModel | None = None,
                      seed: int | None = None, preparation: str = "adiabatic", reference=None,
                      spectrometer: str = "simulated", probes: list[ProbeSet] | None = None,
                      workers: int = 1, correct: bool = False, extrapolate: bool = True) -> SpectrumReport:
    """Measure one-flip splittings, fix their signs from the fitted couplings, and assemble levels.

    ``probes`` (from :func:`spectrum_probes`, optionally pre-simulated)
    fixes the probe settings; two settings are combined by light-shift
    extrapolation.  Levels are relative to ``reference`` (the Neel
    configuration 1010.. by default).
    """
    n = couplings.n_ions
    if probes is None:
        probes = spectrum_probes(couplings, preparation, extrapolate=extrapolate and spectrometer != "exact")
    if spectrometer == "exact":
        sps = []
        for p in probes[0].plans:
            for source, tracked in p.branches:
                sps += exact_splittings(couplings, source, tracked)
    elif spectrometer == "simulated":
        simulate_probes(probes, couplings, workers)
        sets = [measure_plans(ps.plans, ps.probabilities, couplings, model, seed, ps.template, correct=correct)
                for ps in probes]
        sps = sets[0]
        if len(sets) == 2:
            a0, a1 = (ps.template.tones[0].amplitude for ps in probes)
            sps = extrapolate_light_shift(sets[0], sets[1], (a0 / a1) ** 2)
    else:
        raise ValueError(f"unknown spectrometer {spectrometer!r}")
    fitted = solve_couplings(build_design_matrix(sps, n))
    edges = signed_edges(sps, fitted.values)
    if reference is None:
        reference = int("10" * (n // 2) + "1" * (n % 2), 2)
    spec = assemble_spectrum(edges, n, reference)
    d = ising_diagonal(couplings)
    return SpectrumReport(spec, d - d[reference], fitted, edges, sum(len(p.plans) for p in probes))


# ------------------------------------------------------------------ witness

@dataclass
class WitnessReport:
    schedule: DriveSchedule | None
    manifold_fidelity: float
    phases: np.ndarray
    exact_value: float
    table: list[WitnessResult]
    exact_table: list[WitnessResult]
    n_spins: int

    def to_dict(self) -> dict:
        return {
            "n_spins": self.n_spins,
            "schedule": None if self.schedule is None else self.schedule.to_dict(),
            "manifold_fidelity": self.manifold_fidelity,
            "phases": [float(p) for p in self.phases],
            "exact_value": self.exact_value,
            "table": [r.to_dict(self.n_spins) for r in self.table],
            "exact_table": [r.to_dict(self.n_spins) for r in self.exact_table],
        }


def witness_campaign(couplings: CouplingMatrix, model: MeasurementModel | None = None,
                     seed: int | None = None, preparation: str = "drive",
                     schedule: DriveSchedule | None = None, corrected: bool = True) -> WitnessReport:
    """Prepare a W-type state, pick the witness frame, and tabulate reduced witnesses.

    The frame comes from the noiseless state; the table is sampled with
    ``model`` when given and exact otherwise.
    """
    n = couplings.n_ions
    if preparation == "drive":
        schedule = w_prep_schedule(couplings) if schedule is None else schedule
        state = evolve(SpinState.polarized(n), couplings, schedule)
    elif preparation == "ideal":
        schedule = None
        state = ideal_w_state(n)
    else:
        raise ValueError(f"unknown preparation {preparation!r}")
    phases, value = witness_scan_phases(state)
    exact_table = reduced_witness_table(state, phases)
    table = exact_table if model is None else reduced_witness_table(state, phases, model, seed, corrected)
    return WitnessReport(schedule, w_manifold_fidelity(state), phases, witness_value(state, phases),
                         table, exact_table, n)
