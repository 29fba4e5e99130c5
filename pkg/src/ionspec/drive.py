"""Probe schedules, frequency scans, sequential pulses and W-state preparation."""
from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .chain import CouplingMatrix
from .measure import MeasurementModel, correct_detection_errors, rng_stream, sample_counts
from .quantum import (
    MAX_DENSE_SPINS,
    SpinState,
    StepSizeError,
    apply_sigma_y_sum,
    axis_in_xy,
    config_index,
    config_label,
    default_step,
    evolve,
    flip,
    hamming,
    ising_diagonal,
    mirror,
    populations_along,
    propagate,
)

DEFAULT_PROBE_AMPLITUDE = 0.1  # kHz
DEFAULT_PROBE_DURATION = 3.0  # ms
W4_DURATION = 1.8  # ms


@dataclass(frozen=True)
class Tone:
    amplitude: float  # kHz
    frequency: float  # kHz
    phase: float = 0.0  # rad

    def __post_init__(self):
        if self.frequency < 0:
            raise ValueError("tone frequency must be >= 0")


@dataclass(frozen=True)
class DriveSchedule:
    """B(t) = b0 + sum_p B_p sin(2 pi nu_p t + phase_p) for ``duration`` ms.

    With ``segments`` the schedule is the ordered concatenation of its
    segments and its own b0/tones are ignored.
    """

    b0: float = 0.0
    tones: tuple[Tone, ...] = ()
    duration: float = DEFAULT_PROBE_DURATION
    segments: tuple["DriveSchedule", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tones", tuple(self.tones))
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.segments:
            object.__setattr__(self, "duration", sum(s.duration for s in self.segments))
        if self.duration < 0 or (not self.segments and self.duration == 0 and self.tones):
            raise ValueError("duration must be positive")

    @classmethod
    def probe(cls, frequency: float, amplitude: float = DEFAULT_PROBE_AMPLITUDE,
              duration: float = DEFAULT_PROBE_DURATION, b0: float = 0.0, phase: float = 0.0):
        return cls(b0, (Tone(amplitude, frequency, phase),), duration)

    @classmethod
    def sequence(cls, schedules) -> "DriveSchedule":
        return cls(segments=tuple(schedules))

    def field(self, t):
        b = self.b0
        for tone in self.tones:
            b = b + tone.amplitude * np.sin(2 * np.pi * tone.frequency * t + tone.phase)
        return b

    __call__ = field

    def field_bound(self) -> float:
        if self.segments:
            return max(s.field_bound() for s in self.segments)
        return abs(self.b0) + sum(abs(t.amplitude) for t in self.tones)

    def max_frequency(self) -> float:
        if self.segments:
            return max(s.max_frequency() for s in self.segments)
        return max((t.frequency for t in self.tones), default=0.0)

    def with_frequency(self, frequency: float) -> "DriveSchedule":
        first = replace(self.tones[0], frequency=frequency)
        return replace(self, tones=(first,) + self.tones[1:])

    def to_dict(self) -> dict:
        if self.segments:
            return {"segments": [s.to_dict() for s in self.segments]}
        return {
            "b0": self.b0,
            "duration": self.duration,
            "tones": [{"amplitude": t.amplitude, "frequency": t.frequency, "phase": t.phase} for t in self.tones],
        }


class _ScanField:
    """Vectorized field for a batch of frequencies sharing one template."""

    def __init__(self, template: DriveSchedule, freqs: np.ndarray):
        self.b0 = template.b0
        self.freqs = np.asarray(freqs, dtype=float)
        first = template.tones[0]
        self.amp, self.phase = first.amplitude, first.phase
        self.rest = template.tones[1:]

    def __call__(self, t):
        b = self.b0 + self.amp * np.sin(2 * np.pi * self.freqs * t + self.phase)
        for tone in self.rest:
            b = b + tone.amplitude * math.sin(2 * math.pi * tone.frequency * t + tone.phase)
        return b


@dataclass
class ScanResult:
    freq_grid: np.ndarray
    tracked_states: list[int]
    populations: np.ndarray  # [freq, state]
    errors: np.ndarray
    n_spins: int
    initial_config: int
    metadata: dict = field(default_factory=dict)

    def column(self, state: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.tracked_states.index(state)
        return self.freq_grid, self.populations[:, k], self.errors[:, k]

    def labels(self) -> list[str]:
        return [config_label(s, self.n_spins) for s in self.tracked_states]


def one_flip_neighbors(config: int, n: int) -> list[int]:
    return [flip(config, i, n) for i in range(n)]


def _mixture(initial) -> list[tuple[float, SpinState]]:
    if isinstance(initial, SpinState):
        return [(1.0, initial)]
    parts = [(float(w), s) for w, s in initial]
    total = sum(w for w, _ in parts)
    return [(w / total, s) for w, s in parts]


def _chunks(n_items: int, workers: int) -> list[slice]:
    workers = max(1, min(workers, n_items))
    edges = np.linspace(0, n_items, workers + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def scan_probabilities(initial, couplings: CouplingMatrix, template: DriveSchedule, freq_grid,
                       axis=None, dt=None, workers: int = 1, tol: float = 1e-6) -> tuple[np.ndarray, float]:
    """Noiseless readout distributions for every probe frequency.

    The step is validated by halving over the whole grid at once, so the
    result does not depend on how frequencies are split across workers.
    """
    grid = np.asarray(freq_grid, dtype=float)
    parts = _mixture(initial)
    n = parts[0][1].n_spins
    diag = ising_diagonal(couplings)
    if dt is None:
        dt = default_step(diag, n, template.field_bound(), max(float(grid.max()), template.max_frequency()))
    steps = max(1, math.ceil(template.duration / dt - 1e-9))
    slices = _chunks(len(grid), workers)

    def run(step_count):
        def one(sl):
            out = np.zeros((sl.stop - sl.start, 2**n))
            fieldfn = _ScanField(template, grid[sl])
            for w, state in parts:
                psi0 = np.broadcast_to(state.amplitudes, (sl.stop - sl.start, 2**n))
                psi, _ = propagate(psi0, diag, fieldfn, template.duration, n,
                                   template.duration / step_count, validate=False)
                if axis is not None:
                    out += w * populations_along(psi, axis)
                else:
                    out += w * np.abs(psi) ** 2
            return out

        if workers > 1 and len(slices) > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                blocks = list(ex.map(one, slices))
        else:
            blocks = [one(sl) for sl in slices]
        return np.concatenate(blocks, axis=0)

    if template.duration == 0:
        return run(1), 0.0
    coarse = run(steps)
    while True:
        fine = run(2 * steps)
        if np.max(np.abs(fine - coarse)) < tol:
            return fine, template.duration / (2 * steps)
        steps *= 2
        if template.duration / steps < 1e-7:
            raise StepSizeError("step size underflow in scan")
        coarse = fine


def run_scan(initial, couplings: CouplingMatrix, template: DriveSchedule, freq_grid,
             measurement: MeasurementModel | None = None, tracked=None, axis=None,
             correct: bool = False, seed: int | None = None, label: str = "scan",
             workers: int = 1, dt=None, probabilities: np.ndarray | None = None,
             reference: int | None = None) -> ScanResult:
    """Probe-frequency scan of the tracked configuration populations.

    ``initial`` is a SpinState or a list of (weight, SpinState) for an
    incoherent mixture.  Without a measurement model the populations are
    exact and the errors zero.  Shot noise for frequency k is drawn from a
    stream keyed by (seed, label, k).  Precomputed noiseless distributions
    can be passed as ``probabilities`` to resample without re-simulating.
    ``reference`` overrides the configuration the tracked states are
    measured against (by default the most populated one).
    """
    grid = np.asarray(freq_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("frequency grid is empty")
    if not template.tones:
        raise ValueError("scan template needs at least one tone")
    parts = _mixture(initial)
    n = parts[0][1].n_spins
    dominant = max(parts, key=lambda p: p[0])[1]
    init_cfg = int(np.argmax(dominant.probabilities)) if reference is None else config_index(reference)
    if tracked is None:
        tracked = one_flip_neighbors(init_cfg, n)
    tracked = [config_index(t) for t in tracked]
    if probabilities is None:
        probabilities, used_dt = scan_probabilities(initial, couplings, template, grid, axis, dt, workers)
    else:
        used_dt = dt
    meta = {
        "template": template.to_dict(),
        "axis": None if axis is None else [float(a) for a in axis],
        "dt": used_dt,
        "label": label,
        "n_spins": n,
        "initial_config": config_label(init_cfg, n),
    }
    if measurement is None:
        pops = probabilities[:, tracked].copy()
        errs = np.zeros_like(pops)
        meta.update(noiseless=True)
    else:
        seed = measurement.seed if seed is None else seed
        pops = np.empty((len(grid), len(tracked)))
        errs = np.empty_like(pops)
        for k, p in enumerate(probabilities):
            dist, err = sample_counts(p / p.sum(), measurement, rng_stream(seed, label, k))
            if correct:
                c = correct_detection_errors(dist, measurement)
                dist, err = c.probabilities, c.stderr
            pops[k] = dist[tracked]
            errs[k] = err[tracked]
        meta.update(noiseless=False, seed=seed, repetitions=measurement.repetitions,
                    eps_bright_to_dark=measurement.eps_bright_to_dark,
                    eps_dark_to_bright=measurement.eps_dark_to_bright,
                    corrected=correct)
    return ScanResult(grid, tracked, pops, errs, n, init_cfg, meta)


def sequential_pulses(initial: SpinState, couplings: CouplingMatrix, pulses, **kwargs) -> SpinState:
    state = initial
    for pulse in pulses:
        state = evolve(state, couplings, pulse, **kwargs)
    return state


def splitting(couplings: CouplingMatrix, a: int, b: int) -> float:
    """|E_b - E_a| at zero field, kHz."""
    d = ising_diagonal(couplings)
    return float(abs(d[b] - d[a]))


def transfer_time(amplitude: float, multiplicity: int = 1, matrix_element: float = 1.0) -> float:
    """Square-pulse duration for full transfer under sin modulation (rotating-wave)."""
    g = 0.5 * amplitude * matrix_element * math.sqrt(multiplicity)
    return 1.0 / (4.0 * g)


@dataclass(frozen=True)
class PlannedPulse:
    schedule: DriveSchedule
    source: int
    target: int
    splitting: float


class UnreachableError(ValueError):
    pass


def _competition(diag, current: set[int], step_to: int, step_from: int, n: int, linewidth: float):
    """Count unwanted one-flip transitions near the pulse frequency."""
    f = abs(diag[step_to] - diag[step_from])
    clashes = 0
    margin = math.inf
    for c in current:
        for i in range(n):
            d = flip(c, i, n)
            if (c, d) == (step_from, step_to) or d == step_to or d == mirror(step_to, n):
                continue
            det = abs(abs(diag[d] - diag[c]) - f)
            margin = min(margin, det)
            if det < 2 * linewidth:
                clashes += 1
    return clashes, margin


def plan_pulses(initial, target, couplings: CouplingMatrix, amplitude: float = DEFAULT_PROBE_AMPLITUDE,
                linewidth: float = 0.15) -> list[PlannedPulse]:
    """Resonant square pulses driving ``initial`` to ``target`` (or its mirror image).

    Flip orders are enumerated exhaustively; the chosen path has the fewest
    near-degenerate competing transitions, then the largest detuning margin,
    then the most mirror-symmetric intermediate states.
    """
    n = couplings.n_ions
    if n > MAX_DENSE_SPINS:
        raise ValueError(f"pulse planning needs the zero-field spectrum (N <= {MAX_DENSE_SPINS})")
    a, t = config_index(initial), config_index(target)
    limit = n // 2
    if a == t:
        return []
    goals = sorted({t, mirror(t, n)}, key=lambda g: (hamming(a, g), g))
    goal = goals[0]
    if hamming(a, goal) > limit:
        alt = (2**n - 1) ^ a
        hint = ""
        if min(hamming(alt, g) for g in goals) <= limit:
            hint = f"; start from {config_label(alt, n)} instead"
        raise UnreachableError(
            f"{config_label(t, n)} needs {hamming(a, goal)} flips from {config_label(a, n)}, "
            f"more than floor(N/2)={limit}{hint}"
        )
    diag = ising_diagonal(couplings)
    best = None
    for g in goals:
        if hamming(a, g) != hamming(a, goal):
            continue
        spins = [i for i in range(n) if (a ^ g) >> (n - 1 - i) & 1]
        for order in itertools.permutations(spins):
            path = [a]
            for i in order:
                path.append(flip(path[-1], i, n))
            clashes, margin, sym = 0, math.inf, 0
            for k in range(len(order)):
                current = {path[k], mirror(path[k], n)}
                c, m = _competition(diag, current, path[k + 1], path[k], n, linewidth)
                clashes += c
                margin = min(margin, m)
                sym += int(path[k + 1] == mirror(path[k + 1], n) or k == len(order) - 1)
            key = (clashes, -margin, -sym, order)
            if best is None or key < best[0]:
                best = (key, path)
    path = best[1]
    symmetric = np.allclose(couplings.values, couplings.values[::-1, ::-1], atol=1e-12)
    pulses = []
    for k in range(len(path) - 1):
        src, dst = path[k], path[k + 1]
        f = abs(diag[dst] - diag[src])
        # a global beam on symmetric couplings drives the mirror-image transition
        # too; one state talking to a mirror pair (or back) sees a sqrt(2) larger coupling
        mult = 1
        if symmetric and (mirror(src, n) == src) != (mirror(dst, n) == dst):
            mult = 2
        pulses.append(PlannedPulse(DriveSchedule.probe(f, amplitude, transfer_time(amplitude, mult)), src, dst, f))
    return pulses


def _single_defect_groups(couplings: CouplingMatrix, tol: float = 1e-9):
    n = couplings.n_ions
    top = 2**n - 1
    diag = ising_diagonal(couplings)
    groups: list[tuple[float, list[int]]] = []
    for i in range(n):
        f = float(diag[top] - diag[flip(top, i, n)])
        for g in groups:
            if abs(g[0] - f) < tol * max(1.0, abs(f)):
                g[1].append(i)
                break
        else:
            groups.append((f, [i]))
    return groups


def w_manifold_fidelity(state: SpinState) -> float:
    n = state.n_spins
    top = 2**n - 1
    idx = [flip(top, i, n) for i in range(n)]
    return float(state.probabilities[idx].sum())


def w_prep_schedule(couplings: CouplingMatrix, n_spins: int | None = None, duration: float | None = None,
                    amplitude: float | None = None, phases=None, refine: bool = False) -> DriveSchedule:
    """Multi-tone drive taking |11...1> into the single-defect (W) manifold.

    One tone per distinct single-defect splitting, all with the amplitude
    that gives a collective quarter Rabi cycle in ``duration`` (1.8 ms by
    default).  With ``refine`` the duration is then moved to the first
    minimum of the simulated polarized-state population.  Tone phases
    default to the grid value that maximizes the final manifold fidelity.
    """
    n = couplings.n_ions if n_spins is None else n_spins
    if not np.allclose(couplings.values, couplings.values[::-1, ::-1], atol=1e-9):
        warnings.warn("couplings are not left-right symmetric; W-prep tones will not pair up", stacklevel=2)
    groups = _single_defect_groups(couplings)
    # every one-flip matrix element of sum sigma_y has modulus 1 at zero field
    top = 2**n - 1
    e_top = np.zeros(2**n, dtype=complex)
    e_top[top] = 1.0
    elem = np.abs(apply_sigma_y_sum(e_top))
    if duration is None and amplitude is None:
        duration = W4_DURATION
    if amplitude is None:
        amplitude = 1.0 / (2.0 * math.sqrt(n) * duration)
    if duration is None:
        duration = transfer_time(amplitude, n)
    tones = []
    for k, (f, members) in enumerate(groups):
        m = float(elem[flip(top, members[0], n)])
        ph = 0.0 if phases is None else float(phases[k])
        tones.append(Tone(amplitude / m, f, ph))
    sched = DriveSchedule(0.0, tuple(tones), duration)
    if phases is None and len(tones) > 1:
        sched = _best_phases(couplings, sched)
    if refine:
        sched = _refine_duration(couplings, sched)
    return sched


def _best_phases(couplings, sched: DriveSchedule, grid_points: int = 8) -> DriveSchedule:
    n = couplings.n_ions
    init = SpinState.polarized(n)
    best = None
    grid = np.arange(grid_points) * 2 * np.pi / grid_points
    for combo in itertools.product(grid, repeat=len(sched.tones) - 1):
        tones = (sched.tones[0],) + tuple(replace(t, phase=float(p)) for t, p in zip(sched.tones[1:], combo))
        trial = replace(sched, tones=tones)
        fid = w_manifold_fidelity(evolve(init, couplings, trial))
        if best is None or fid > best[0] + 1e-12:
            best = (fid, trial)
    return best[1]


def _refine_duration(couplings, sched: DriveSchedule, samples: int = 121) -> DriveSchedule:
    n = couplings.n_ions
    top = 2**n - 1
    diag = ising_diagonal(couplings)
    times = np.linspace(0, 1.5 * sched.duration, samples)
    dt = times[1]
    psi = SpinState.polarized(n).amplitudes
    pops = [1.0]
    for k in range(1, samples):
        psi, _ = propagate(psi, diag, sched.field, dt, n, t0=times[k - 1],
                           field_bound=sched.field_bound(), freq_bound=sched.max_frequency())
        pops.append(float(abs(psi[top]) ** 2))
    pops = np.array(pops)
    k = 1
    while k < samples - 1 and not (pops[k] <= pops[k - 1] and pops[k] <= pops[k + 1]):
        k += 1
    # parabolic interpolation around the sampled minimum
    if 0 < k < samples - 1:
        y0, y1, y2 = pops[k - 1], pops[k], pops[k + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom > 0 else 0.0
        t_min = times[k] + shift * dt
    else:
        t_min = times[k]
    return replace(sched, duration=float(t_min))


def xy_axis(phi: float = math.pi / 4) -> np.ndarray:
    return axis_in_xy(phi)
