"""Gap spectroscopy versus static field, and adiabatic ground-state preparation.

The map follows the protocol of preparing the polarized state (small B0) or
the ground state (near the critical region) and recording how much of it a
weak modulated probe removes.  Energies here are those of the ferromagnetic
form -sum J s s + B sum sigma_y, i.e. the spectrum of the simulator read
from its top: the polarized state is the zero-field ground state and
single-defect states sit 2 sum_j J_kj above it.  Populations are identical
under either sign.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .chain import CouplingMatrix
from .drive import DriveSchedule, scan_probabilities
from .quantum import SpinState, axis_in_xy, diagonalize, ising_diagonal, propagate

DEFAULT_SWITCH = 0.5  # in units of <J>
DEFAULT_PHI = -math.pi / 4  # ground state tilts from +x toward -y for B0 > 0
DEGENERACY_TOL = 1e-9  # kHz
LOW_FIDELITY = 0.9


class GapError(RuntimeError):
    pass


def gap_couplings(couplings: CouplingMatrix, convention: str = "ferro") -> CouplingMatrix:
    if convention == "ferro":
        return CouplingMatrix(-couplings.values)
    if convention == "native":
        return couplings
    raise ValueError(f"unknown convention {convention!r}")


def mean_coupling(couplings: CouplingMatrix) -> float:
    """<J>: the average over ions of the summed coupling each ion feels."""
    return couplings.mean_site_total()


def _ground_space(energies: np.ndarray) -> int:
    return int(np.sum(energies - energies[0] < DEGENERACY_TOL))


def lowest_coupled_state(couplings: CouplingMatrix, b0: float, reference=None, threshold: float = 1e-6,
                         convention: str = "ferro") -> tuple[int, float, float]:
    """(eigen index, E_e - E_ref, |<e|sum sigma_y|ref>|^2) of the lowest coupled state.

    ``reference`` defaults to the ground state; when the ground level is
    degenerate the polarized configuration projected onto it is used.
    Levels degenerate with the reference are skipped.
    """
    h = gap_couplings(couplings, convention)
    sol = diagonalize(h, b0)
    n = couplings.n_ions
    if reference is None:
        g = _ground_space(sol.energies)
        if g > 1:
            vecs = sol.states[:, :g]
            top = np.zeros(2**n, dtype=complex)
            top[-1] = 1.0
            ref = vecs @ (vecs.conj().T @ top)
            nrm = np.linalg.norm(ref)
            ref = ref / nrm if nrm > 1e-12 else sol.states[:, 0]
        else:
            ref = sol.states[:, 0]
    else:
        ref = reference.amplitudes if isinstance(reference, SpinState) else np.asarray(reference)
    sol = diagonalize(h, b0, reference=ref)
    e_ref = float(np.real(ref.conj() @ (sol.states @ (sol.energies * (sol.states.conj().T @ ref)))))
    flags = sol.coupled_flags
    total = flags.sum()
    if total <= 0:
        raise GapError("reference state has no sigma_y coupling")
    order = np.argsort(np.abs(sol.energies - e_ref))
    for k in order:
        de = sol.energies[k] - e_ref
        if abs(de) < DEGENERACY_TOL:
            continue
        if flags[k] / total > threshold:
            return int(k), float(abs(de)), float(flags[k])
    raise GapError("no coupled excited state found")


def exact_gap_curve(couplings: CouplingMatrix, b0_grid, convention: str = "ferro") -> np.ndarray:
    return np.array([lowest_coupled_state(couplings, float(b), convention=convention)[1] for b in b0_grid])


def exact_levels(couplings: CouplingMatrix, b0_grid, convention: str = "ferro") -> np.ndarray:
    """All eigenvalues relative to the ground state, one row per B0."""
    h = gap_couplings(couplings, convention)
    rows = []
    for b in b0_grid:
        e = diagonalize(h, float(b)).energies
        rows.append(e - e[0])
    return np.array(rows)


@dataclass
class RampField:
    """Transverse field ramp from ``b_start`` to ``b_end`` over ``duration`` ms."""

    b_start: float
    b_end: float
    duration: float
    profile: str = "exponential"
    rate: float = 5.0  # e-foldings over the ramp (exponential profile)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.duration == 0:
            return np.full_like(t, self.b_end)
        u = np.clip(t / self.duration, 0.0, 1.0)
        if self.profile == "linear":
            return self.b_start + (self.b_end - self.b_start) * u
        if self.profile == "exponential":
            decay = (np.exp(-self.rate * u) - math.exp(-self.rate)) / (1 - math.exp(-self.rate))
            return self.b_end + (self.b_start - self.b_end) * decay
        raise ValueError(f"unknown ramp profile {self.profile!r}")

    def bound(self) -> float:
        return max(abs(self.b_start), abs(self.b_end))


@dataclass
class AdiabaticResult:
    state: SpinState
    fidelity: float
    b_start: float
    b_end: float
    duration: float
    profile: str


def y_polarized(n: int) -> SpinState:
    """Ground state of +B sum sigma_y for B > 0: every spin along -y."""
    return SpinState.product(n, [(0.0, -1.0, 0.0)] * n)


def ground_fidelity(state: SpinState, couplings: CouplingMatrix, b: float, convention: str = "ferro") -> float:
    sol = diagonalize(gap_couplings(couplings, convention), b)
    g = _ground_space(sol.energies)
    amp = sol.states[:, :g].conj().T @ state.amplitudes
    return float(np.sum(np.abs(amp) ** 2))


def minimum_ramp_gap(couplings: CouplingMatrix, b_lo: float, b_hi: float, samples: int = 25,
                     convention: str = "ferro") -> float:
    grid = np.linspace(b_lo, b_hi, samples)
    return float(exact_gap_curve(couplings, grid, convention).min())


def prepare_ground_adiabatic(couplings: CouplingMatrix, b_target: float, duration: float | None = None,
                             b_start: float | None = None, profile: str = "exponential",
                             convention: str = "ferro", initial: SpinState | None = None) -> AdiabaticResult:
    """Ramp the transverse field from ``b_start`` down to ``b_target``.

    Starts from all spins along -y, the ground state at large field.  The
    default start is 10x the largest |J|; the default duration is ten times
    the inverse of the smallest coupled gap met along the ramp.
    """
    n = couplings.n_ions
    h = gap_couplings(couplings, convention)
    scale = float(np.abs(couplings.values).max(initial=0.0))
    if b_start is None:
        b_start = max(10.0 * scale, b_target)
    if duration is None:
        duration = 10.0 / minimum_ramp_gap(couplings, b_target, b_start, convention=convention)
    state = y_polarized(n) if initial is None else initial
    ramp = RampField(b_start, b_target, duration, profile)
    if duration > 0:
        diag = ising_diagonal(h)
        psi, _ = propagate(state.amplitudes, diag, ramp, duration, n, field_bound=ramp.bound())
        state = SpinState.normalized(n, psi)
    fid = ground_fidelity(state, couplings, b_target, convention)
    return AdiabaticResult(state, fid, b_start, b_target, duration, profile)


@dataclass
class GapMap:
    b0_grid: np.ndarray
    freq_grid: np.ndarray
    populations: np.ndarray  # [b0, freq] population left in the protocol state
    protocols: list[str]  # "polarized-x" or "ground-phi" per column
    measurement_axes: list[list[float]]
    levels: np.ndarray  # exact levels above ground per b0
    lowest_coupled: np.ndarray  # exact curve
    ridge: np.ndarray  # measured depletion ridge per b0
    delta: float
    delta_b0: float
    measured_delta: float
    measured_delta_b0: float
    warnings: dict = field(default_factory=dict)
    fidelities: dict = field(default_factory=dict)
    mean_j: float = math.nan
    amplitudes: np.ndarray | None = None

    def rescaled(self) -> np.ndarray:
        """Per-column min-max normalized depletion, for display only."""
        dep = 1.0 - self.populations
        lo = dep.min(axis=1, keepdims=True)
        hi = dep.max(axis=1, keepdims=True)
        span = np.where(hi - lo > 0, hi - lo, 1.0)
        return (dep - lo) / span

    def ridge_deviation(self) -> np.ndarray:
        return np.abs(self.ridge - self.lowest_coupled)


def find_ridge(freq_grid, depletion, fraction: float = 0.5) -> float:
    """Lowest-frequency depletion peak with at least ``fraction`` of the top prominence."""
    f = np.asarray(freq_grid, dtype=float)
    d = np.asarray(depletion, dtype=float)
    floor = d.min() - 1e-12
    padded = np.concatenate([[floor], d, [floor]])
    peaks, props = find_peaks(padded, prominence=0.0)
    if peaks.size == 0:
        return math.nan
    prom = props["prominences"]
    keep = peaks[prom >= fraction * prom.max()] - 1
    return float(f[keep.min()])


def default_grids(couplings: CouplingMatrix, n_b0: int = 30, n_freq: int = 60, b0_max: float = 1.2,
                  convention: str = "ferro") -> tuple[np.ndarray, np.ndarray]:
    """B0 from 0 to ``b0_max`` <J>, frequencies spanning the exact gap curve."""
    b0 = np.linspace(0.0, b0_max * mean_coupling(couplings), n_b0)
    curve = exact_gap_curve(couplings, b0, convention)
    lo, hi = 0.85 * curve.min(), 1.08 * curve.max()
    return b0, np.linspace(lo, hi, n_freq)


def map_gap(couplings: CouplingMatrix, b0_grid, freq_grid, probe_amplitude: float = 0.1,
            probe_duration: float = 3.0, switch: float = DEFAULT_SWITCH, phi: float = DEFAULT_PHI,
            ramp_duration: float | None = None, ramp_profile: str = "exponential",
            workers: int = 1, convention: str = "ferro", ridge_fraction: float = 0.5,
            normalize_amplitude: bool = True, phase_average: bool = True) -> GapMap:
    """Noiseless depletion map over (B0, probe frequency).

    Columns with B0 below ``switch * <J>`` start in |11...1> and read it out
    along x; the rest start in the adiabatically prepared ground state and
    read |up...up>_phi along the in-plane axis at angle ``phi``.  With
    ``normalize_amplitude`` the probe is divided by the ground to
    lowest-coupled matrix element (when above 1) so every column gets the
    pulse area of a unit-element transition and is never overdriven.

    The phi readout is not a configuration, so the ground-excited coherence
    adds a term odd in B_p that distorts the line.  ``phase_average``
    averages probe phases 0 and pi, which cancels it.
    """
    b0_grid = np.asarray(b0_grid, dtype=float)
    freq_grid = np.asarray(freq_grid, dtype=float)
    n = couplings.n_ions
    h = gap_couplings(couplings, convention)
    mj = mean_coupling(couplings)
    top = 2**n - 1

    def column(b0):
        warn = None
        fid = None
        if b0 < switch * mj:
            init = SpinState.polarized(n)
            axis = None
            proto = "polarized-x"
            axis_vec = [1.0, 0.0, 0.0]
        else:
            prep = prepare_ground_adiabatic(couplings, b0, ramp_duration, profile=ramp_profile,
                                            convention=convention)
            init = prep.state
            fid = prep.fidelity
            if fid < LOW_FIDELITY:
                warn = f"adiabatic preparation fidelity {fid:.3f} < {LOW_FIDELITY}"
            axis = axis_in_xy(phi)
            axis_vec = [float(a) for a in axis]
            proto = "ground-phi"
        amp = probe_amplitude
        if normalize_amplitude:
            amp /= max(1.0, math.sqrt(lowest_coupled_state(couplings, b0, convention=convention)[2]))
        template = DriveSchedule.probe(freq_grid[0], amp, probe_duration, b0=b0)
        probs, _ = scan_probabilities(init, h, template, freq_grid, axis=axis)
        if phase_average and axis is not None:
            flipped = DriveSchedule.probe(freq_grid[0], amp, probe_duration, b0=b0, phase=math.pi)
            probs = 0.5 * (probs + scan_probabilities(init, h, flipped, freq_grid, axis=axis)[0])
        return probs[:, top], proto, axis_vec, warn, fid, amp

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            cols = list(ex.map(column, b0_grid))
    else:
        cols = [column(b) for b in b0_grid]
    pops = np.array([c[0] for c in cols])
    curve = exact_gap_curve(couplings, b0_grid, convention)
    levels = exact_levels(couplings, b0_grid, convention)
    ridge = np.array([find_ridge(freq_grid, 1.0 - p, ridge_fraction) for p in pops])
    k = int(np.argmin(curve))
    km = int(np.nanargmin(ridge)) if np.any(np.isfinite(ridge)) else 0
    warn = {i: c[3] for i, c in enumerate(cols) if c[3]}
    for i, msg in warn.items():
        warnings.warn(f"B0={b0_grid[i]:.3f} kHz: {msg}", stacklevel=2)
    fids = {i: c[4] for i, c in enumerate(cols) if c[4] is not None}
    return GapMap(b0_grid, freq_grid, pops, [c[1] for c in cols], [c[2] for c in cols], levels, curve,
                  ridge, float(curve[k]), float(b0_grid[k]), float(ridge[km]), float(b0_grid[km]),
                  warn, fids, mj, np.array([c[5] for c in cols]))
