"""Spin-squeezing witness on full states and reduced subsystems."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .measure import MeasurementModel, correct_detection_errors, functional_stderr, rng_stream, sample_counts
from .quantum import (
    SpinState,
    apply_product,
    local_axis_op,
    partial_trace,
    reduce_density,
    rotation_operator,
    rotation_to_x,
    spin_signs,
)

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class WitnessResult:
    subsystem: tuple[int, ...]
    value: float
    stderr: float
    n_subsystem: int
    min_possible: float

    @property
    def traced(self) -> tuple[int, ...]:
        return ()

    def to_dict(self, n_total: int | None = None) -> dict:
        d = {
            "subsystem": list(self.subsystem),
            "value": self.value,
            "stderr": self.stderr,
            "n_subsystem": self.n_subsystem,
            "min_possible": self.min_possible,
        }
        if n_total is not None:
            d["traced"] = [i for i in range(n_total) if i not in self.subsystem]
        return d


def _collective(gamma: str, phases) -> np.ndarray:
    """Dense J_gamma for len(phases) spins in the rotated frame."""
    m = len(phases)
    dim = 2**m
    out = np.zeros((dim, dim), dtype=complex)
    eye = np.eye(2)
    for i in range(m):
        ops = [eye] * m
        ops[i] = local_axis_op(gamma, phases[i])
        term = ops[0]
        for op in ops[1:]:
            term = np.kron(term, op)
        out += term
    return 0.5 * out


def _as_density(state) -> np.ndarray:
    if isinstance(state, SpinState):
        psi = state.amplitudes
        return np.outer(psi, psi.conj())
    a = np.asarray(state, dtype=complex)
    if a.ndim == 1:
        return np.outer(a, a.conj())
    return a


def witness_value(state, phases=None) -> float:
    """Exact <W_ss> = (N-1) Var(J_x) + N/2 - <J_y^2> - <J_z^2>."""
    rho = _as_density(state)
    m = int(round(math.log2(rho.shape[0])))
    if m < 2:
        raise ValueError("witness needs at least two spins")
    phases = np.zeros(m) if phases is None else np.asarray(phases, dtype=float)
    jx, jy, jz = (_collective(g, phases) for g in AXES)

    def ev(op):
        return float(np.real(np.trace(rho @ op)))

    var_x = ev(jx @ jx) - ev(jx) ** 2
    return (m - 1) * var_x + m / 2 - ev(jy @ jy) - ev(jz @ jz)


def frame_axes(gamma: str, phases) -> list[np.ndarray]:
    """Bloch direction each spin is read along for the collective J_gamma."""
    out = []
    for p in phases:
        c, s = math.cos(p), math.sin(p)
        out.append({"x": np.array([1.0, 0, 0]), "y": np.array([0, c, s]), "z": np.array([0, -s, c])}[gamma])
    return out


def frame_populations(state, gamma: str, phases) -> np.ndarray:
    """Configuration probabilities when each spin is read along its frame axis."""
    rho = _as_density(state)
    m = int(round(math.log2(rho.shape[0])))
    ops = []
    for axis in frame_axes(gamma, phases):
        rot_axis, angle = rotation_to_x(axis)
        ops.append(rotation_operator(rot_axis, angle))
    u = np.eye(1)
    for op in ops:
        u = np.kron(u, op)
    if rho.shape[0] != 2**m:
        raise ValueError("state dimension is not a power of two")
    return np.clip(np.real(np.diag(u @ rho @ u.conj().T)), 0.0, None)


def _witness_from_distributions(dists: dict, m: int):
    """W and its gradient weights per frame from x/y/z readout distributions."""
    f1 = 0.5 * spin_signs(m).sum(axis=1).astype(float)
    f2 = f1**2
    mx = float(dists["x"] @ f1)
    value = (m - 1) * (float(dists["x"] @ f2) - mx**2) + m / 2 - float(dists["y"] @ f2) - float(dists["z"] @ f2)
    grads = {"x": (m - 1) * (f2 - 2 * mx * f1), "y": -f2, "z": -f2}
    return value, grads


def _marginal(dist: np.ndarray, n: int, keep) -> np.ndarray:
    keep = sorted(keep)
    t = dist.reshape((2,) * n)
    drop = tuple(i for i in range(n) if i not in keep)
    return t.sum(axis=drop).reshape(-1) if drop else dist


def sample_frames(state, phases, model: MeasurementModel, seed: int | None = None, label: str = "witness"):
    """One independent shot ensemble per frame (x, y, z) of the full system."""
    seed = model.seed if seed is None else seed
    n = len(phases)
    out = {}
    for g in AXES:
        p = frame_populations(state, g, phases)
        out[g], _ = sample_counts(p / p.sum(), model, rng_stream(seed, label, g))
    return out


def witness_from_samples(samples: dict, n: int, keep, model: MeasurementModel,
                         corrected: bool = True) -> WitnessResult:
    keep = tuple(sorted(keep))
    m = len(keep)
    if m < 2:
        raise ValueError("witness needs at least two spins")
    sub_model = model
    dists = {}
    for g in AXES:
        marg = _marginal(samples[g], n, keep)
        dists[g] = correct_detection_errors(marg, sub_model).probabilities if corrected else marg
    value, grads = _witness_from_distributions(dists, m)
    var = 0.0
    for g in AXES:
        raw = _marginal(samples[g], n, keep)
        var += functional_stderr(grads[g], raw, sub_model, corrected) ** 2
    return WitnessResult(keep, float(value), math.sqrt(var), m, -(m - 1.0))


def witness_ss(state, phases=None, keep=None, model: MeasurementModel | None = None,
               seed: int | None = None, corrected: bool = True) -> WitnessResult:
    """<W_ss> on the spins ``keep`` (all by default).

    ``state`` is a SpinState, a state vector or a density matrix.  Without a
    measurement model the value is exact; with one, x, y and z frames are
    sampled independently and the error comes from the delta method.
    """
    rho = _as_density(state)
    n = int(round(math.log2(rho.shape[0])))
    keep = tuple(range(n)) if keep is None else tuple(sorted(set(keep)))
    if len(keep) < 2:
        raise ValueError("witness needs at least two spins")
    phases = np.zeros(n) if phases is None else np.asarray(phases, dtype=float)
    if model is None:
        sub = rho if len(keep) == n else reduce_density(rho, keep)
        value = witness_value(sub, phases[list(keep)])
        return WitnessResult(keep, value, 0.0, len(keep), -(len(keep) - 1.0))
    samples = sample_frames(rho, phases, model, seed)
    return witness_from_samples(samples, n, keep, model, corrected)


def witness_scan_phases(state, grid_points: int = 8, refine: bool = True) -> tuple[np.ndarray, float]:
    """Frame phases minimizing the exact witness.

    A common rotation of every frame about x leaves the witness unchanged,
    so spin 0 is pinned at phase 0 and the others are grid searched, then
    polished with Nelder-Mead.
    """
    rho = _as_density(state)
    n = int(round(math.log2(rho.shape[0])))
    grid = np.arange(grid_points) * 2 * np.pi / grid_points
    best = (math.inf, np.zeros(n))
    for combo in itertools.product(grid, repeat=n - 1):
        ph = np.concatenate([[0.0], combo])
        v = witness_value(rho, ph)
        if v < best[0] - 1e-12:
            best = (v, ph)
    if refine and n > 1:
        res = minimize(lambda p: witness_value(rho, np.concatenate([[0.0], p])), best[1][1:],
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if res.fun < best[0]:
            best = (float(res.fun), np.concatenate([[0.0], res.x]))
    return best[1], float(best[0])


def reduced_witness_table(state, phases=None, model: MeasurementModel | None = None,
                          seed: int | None = None, corrected: bool = True) -> list[WitnessResult]:
    """Full system, every single-spin trace and every pair trace."""
    rho = _as_density(state)
    n = int(round(math.log2(rho.shape[0])))
    if n > 10:
        raise ValueError("reduced witness table is limited to 10 spins")
    phases = np.zeros(n) if phases is None else np.asarray(phases, dtype=float)
    subsets = [tuple(range(n))]
    subsets += [tuple(i for i in range(n) if i != k) for k in range(n)]
    if n >= 4:
        subsets += [tuple(i for i in range(n) if i not in pair) for pair in itertools.combinations(range(n), 2)]
    if model is None:
        return [witness_ss(rho, phases, keep=s) for s in subsets]
    samples = sample_frames(rho, phases, model, seed)
    return [witness_from_samples(samples, n, s, model, corrected) for s in subsets]


def ideal_w_state(n: int, phases=None) -> SpinState:
    """Equal superposition of the single-defect configurations of |11...1>."""
    top = 2**n - 1
    amps = np.zeros(2**n, dtype=complex)
    for k in range(n):
        ph = 0.0 if phases is None else phases[k]
        amps[top ^ (1 << (n - 1 - k))] = np.exp(1j * ph)
    return SpinState(n, amps / math.sqrt(n))
