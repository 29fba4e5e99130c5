"""N-spin states in the sigma-x eigenbasis.

Basis index c encodes spin i in bit (N-1-i): spin 0 is the most significant
bit, bit value 1 is up-along-x.  Energies are in kHz and times in ms with
h = 1, so a level E accumulates phase exp(-2j*pi*E*t).

In the bit-indexed local basis (index 0 = down-x, 1 = up-x) the Pauli
operators are sigma_x = -Z, sigma_y = Y and sigma_z = X in the usual
computational-basis notation.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numba
import numpy as np

from .chain import CouplingMatrix

MAX_DENSE_SPINS = 14

SX = np.array([[-1, 0], [0, 1]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI = {"x": SX, "y": SY, "z": SZ}

_YOSHIDA_W1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
_YOSHIDA_W0 = 1.0 - 2.0 * _YOSHIDA_W1


class DimensionError(ValueError):
    pass


class StepSizeError(RuntimeError):
    pass


# -- configurations -----------------------------------------------------------

@functools.lru_cache(maxsize=32)
def spin_signs(n: int) -> np.ndarray:
    """(2**n, n) array of +-1 spin values, read-only."""
    idx = np.arange(2**n)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))) & 1
    s = (2 * bits - 1).astype(np.int8)
    s.setflags(write=False)
    return s


def config_index(config) -> int:
    """Index of a configuration given as '0111' or a bit sequence."""
    if isinstance(config, (int, np.integer)):
        return int(config)
    bits = [int(b) for b in config]
    out = 0
    for b in bits:
        out = (out << 1) | b
    return out


def config_label(index: int, n: int) -> str:
    return format(index, f"0{n}b")


def flip(index: int, spin: int, n: int) -> int:
    return index ^ (1 << (n - 1 - spin))


def bit(index: int, spin: int, n: int) -> int:
    return (index >> (n - 1 - spin)) & 1


def mirror(index: int, n: int) -> int:
    return config_index(config_label(index, n)[::-1])


def hamming(a: int, b: int) -> int:
    return bin(a ^ b).count("1")


def differing_spins(a: int, b: int, n: int) -> list[int]:
    return [i for i in range(n) if bit(a, i, n) != bit(b, i, n)]


# -- states -------------------------------------------------------------------

@dataclass(frozen=True)
class SpinState:
    n_spins: int
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex)
        if a.shape != (2**self.n_spins,):
            raise ValueError(f"expected {2**self.n_spins} amplitudes, got {a.shape}")
        norm = float(np.vdot(a, a).real)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"state not normalized: |psi|^2 = {norm}")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_config(cls, n: int, config) -> "SpinState":
        a = np.zeros(2**n, dtype=complex)
        a[config_index(config)] = 1.0
        return cls(n, a)

    @classmethod
    def polarized(cls, n: int, up: bool = True) -> "SpinState":
        return cls.from_config(n, (2**n - 1) if up else 0)

    @classmethod
    def product(cls, n: int, axes) -> "SpinState":
        """Product state with spin i pointing along the unit Bloch vector axes[i]."""
        axes = np.broadcast_to(np.asarray(axes, dtype=float), (n, 3))
        psi = np.ones(1, dtype=complex)
        for v in axes:
            psi = np.kron(psi, _spinor(v))
        return cls(n, psi)

    @classmethod
    def normalized(cls, n: int, amplitudes) -> "SpinState":
        a = np.asarray(amplitudes, dtype=complex)
        return cls(n, a / np.linalg.norm(a))

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def to_records(self, threshold: float = 0.0) -> list[dict]:
        p = self.probabilities
        return [
            {"index": int(i), "config": config_label(int(i), self.n_spins), "probability": float(p[i])}
            for i in np.flatnonzero(p > threshold)
        ]


def _spinor(v) -> np.ndarray:
    """Spin-1/2 state with Bloch vector v in the bit-indexed x basis."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    rho = 0.5 * (np.eye(2) + v[0] * SX + v[1] * SY + v[2] * SZ)
    w, u = np.linalg.eigh(rho)
    psi = u[:, np.argmax(w)]
    k = np.argmax(np.abs(psi))
    return psi * np.exp(-1j * np.angle(psi[k]))


def _as_array(state) -> tuple[np.ndarray, int]:
    if isinstance(state, SpinState):
        return state.amplitudes, state.n_spins
    a = np.asarray(state)
    n = int(round(math.log2(a.shape[-1])))
    return a, n


# -- local operators ----------------------------------------------------------

def apply_local(psi: np.ndarray, spin: int, op: np.ndarray, n: int) -> np.ndarray:
    """Apply a 2x2 operator to one spin; leading axes of psi are batch axes."""
    batch = psi.shape[:-1]
    v = psi.reshape(batch + (2**spin, 2, 2 ** (n - 1 - spin)))
    out = np.einsum("ab,...xby->...xay", op, v)
    return out.reshape(psi.shape)


def apply_product(psi: np.ndarray, ops, n: int) -> np.ndarray:
    for i, op in enumerate(ops):
        if op is not None:
            psi = apply_local(psi, i, op, n)
    return psi


def apply_sigma_y_sum(state):
    """(sum_i sigma_y_i)|psi>: flip bit i with phase -i from 1 and +i from 0."""
    psi, n = _as_array(state)
    out = np.zeros(psi.shape, dtype=complex)
    batch = psi.shape[:-1]
    for i in range(n):
        v = psi.reshape(batch + (2**i, 2, 2 ** (n - 1 - i)))
        o = out.reshape(v.shape)
        o[..., 0, :] += -1j * v[..., 1, :]
        o[..., 1, :] += 1j * v[..., 0, :]
    return out


def apply_collective(psi: np.ndarray, gamma: str, n: int, phases=None) -> np.ndarray:
    """J_gamma psi with J_gamma = 1/2 sum_i sigma_gamma_i in a frame rotated about x."""
    out = np.zeros(psi.shape, dtype=complex)
    for i in range(n):
        out += apply_local(psi, i, local_axis_op(gamma, None if phases is None else phases[i]), n)
    return 0.5 * out


def local_axis_op(gamma: str, phase: float | None = None) -> np.ndarray:
    """sigma_gamma for one spin whose y-z frame is rotated by ``phase`` about x."""
    if phase is None or gamma == "x":
        return PAULI[gamma]
    c, s = math.cos(phase), math.sin(phase)
    if gamma == "y":
        return c * SY + s * SZ
    return c * SZ - s * SY


# -- Hamiltonian --------------------------------------------------------------

def ising_diagonal(couplings: CouplingMatrix | np.ndarray) -> np.ndarray:
    """sum_{i<j} J_ij s_i s_j for every configuration, kHz."""
    j = couplings.values if isinstance(couplings, CouplingMatrix) else np.asarray(couplings, dtype=float)
    n = j.shape[0]
    s = spin_signs(n).astype(float)
    return 0.5 * np.einsum("ci,ci->c", s @ j, s)


def _gauge(n: int) -> np.ndarray:
    """diag(i**popcount(c)) mapping the real-gauge Hamiltonian back to the x basis."""
    pop = (spin_signs(n) > 0).sum(axis=1)
    return np.array([1, 1j, -1, -1j])[pop % 4]


def _real_hamiltonian(diag: np.ndarray, b: float, n: int) -> np.ndarray:
    """H in the gauge diag(i**popcount) where the sigma_y sum is real."""
    dim = 2**n
    h = np.diag(diag.astype(float))
    idx = np.arange(dim)
    for i in range(n):
        h[idx ^ (1 << (n - 1 - i)), idx] += b
    return h


def hamiltonian_matrix(couplings: CouplingMatrix, b: float) -> np.ndarray:
    n = couplings.n_ions
    if n > MAX_DENSE_SPINS:
        raise DimensionError(f"dense Hamiltonian capped at {MAX_DENSE_SPINS} spins")
    gauge = _gauge(n)
    return (gauge[:, None] * _real_hamiltonian(ising_diagonal(couplings), b, n)) * gauge.conj()[None, :]


@dataclass(frozen=True)
class EigenSolution:
    energies: np.ndarray
    states: np.ndarray  # columns are eigenvectors
    coupled_flags: np.ndarray  # |<e|sum sigma_y|ref>|**2 per eigenstate
    reference: np.ndarray


def diagonalize(couplings: CouplingMatrix, b0: float = 0.0, reference=None) -> EigenSolution:
    """Dense eigendecomposition of H = sum J s s + b0 sum sigma_y.

    ``reference`` defaults to the ground state; ``coupled_flags`` holds the
    squared sigma_y-sum matrix elements from it to every eigenstate.
    """
    n = couplings.n_ions
    if n > MAX_DENSE_SPINS:
        raise DimensionError(
            f"dense diagonalization capped at {MAX_DENSE_SPINS} spins; use scan-only workflows"
        )
    h = _real_hamiltonian(ising_diagonal(couplings), b0, n)
    energies, vecs = np.linalg.eigh(h)
    gauge = _gauge(n)
    states = gauge[:, None] * vecs
    if reference is None:
        ref = states[:, 0]
    else:
        ref, _ = _as_array(reference)
    flags = np.abs(states.conj().T @ apply_sigma_y_sum(ref)) ** 2
    return EigenSolution(energies, states, flags, np.asarray(ref))


# -- time evolution -----------------------------------------------------------

def _one_flip_spread(diag: np.ndarray, n: int) -> float:
    idx = np.arange(diag.size)
    return max((float(np.max(np.abs(diag - diag[idx ^ (1 << k)]))) for k in range(n)), default=0.0)


def default_step(diag: np.ndarray, n: int, field_bound: float, freq_bound: float) -> float:
    rate = _one_flip_spread(diag, n) + 2 * n * abs(field_bound) + freq_bound + 1e-3
    return 0.08 / rate


@numba.njit(cache=True)
def _split_kernel(psi, diag, thetas, h, w1, w0):  # pragma: no cover - compiled
    rows, dim = psi.shape
    steps = thetas.shape[0]
    n = 0
    while (1 << n) < dim:
        n += 1
    two_pi = 2.0 * np.pi
    p_half = np.exp(-1j * two_pi * diag * (w1 * h / 2))
    p_mid = np.exp(-1j * two_pi * diag * ((w1 + w0) * h / 2))
    p_full = np.exp(-1j * two_pi * diag * (w1 * h))
    for r in range(rows):
        v = psi[r]
        for c in range(dim):
            v[c] *= p_half[c]
        for k in range(steps):
            for j in range(3):
                th = two_pi * thetas[k, j, r]
                cs = np.cos(th)
                sn = np.sin(th)
                for i in range(n):
                    mask = 1 << (n - 1 - i)
                    for c in range(dim):
                        if c & mask == 0:
                            a0 = v[c]
                            a1 = v[c | mask]
                            v[c] = cs * a0 - sn * a1
                            v[c | mask] = sn * a0 + cs * a1
                if j < 2:
                    for c in range(dim):
                        v[c] *= p_mid[c]
            if k < steps - 1:
                for c in range(dim):
                    v[c] *= p_full[c]
            else:
                for c in range(dim):
                    v[c] *= p_half[c]
    return psi


def _propagate_split(psi, diag, field, t0, duration, steps, n):
    # Yoshida composition of Strang steps; each kick samples the field at
    # the midpoint of its sub-interval.
    h = duration / steps
    w1, w0 = _YOSHIDA_W1, _YOSHIDA_W0
    edges = t0 + h * np.arange(steps)[:, None] + h * np.array([0.0, w1, w1 + w0, 1.0])[None, :]
    shape = psi.shape
    rows = int(np.prod(shape[:-1], dtype=int))
    lo, hi = edges[:, :-1, None], edges[:, 1:, None]
    ints = np.asarray((hi - lo) * field(0.5 * (lo + hi)), dtype=float)
    thetas = np.ascontiguousarray(np.broadcast_to(ints, (steps, 3, rows)))
    work = np.array(psi, dtype=complex).reshape(rows, shape[-1])
    work = _split_kernel(work, np.asarray(diag, dtype=float), thetas, h, w1, w0)
    return work.reshape(shape)


def _propagate_rk4(psi, diag, field, t0, duration, steps, n):
    h = duration / steps
    two_pi = 2 * np.pi

    def rhs(t, y):
        b = field(t)
        if np.ndim(b):
            b = np.asarray(b)[:, None]
        return -1j * two_pi * (diag * y + b * apply_sigma_y_sum(y))

    for k in range(steps):
        t = t0 + k * h
        k1 = rhs(t, psi)
        k2 = rhs(t + h / 2, psi + h / 2 * k1)
        k3 = rhs(t + h / 2, psi + h / 2 * k2)
        k4 = rhs(t + h, psi + h * k3)
        psi = psi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


_METHODS = {"split4": _propagate_split, "rk4": _propagate_rk4}


def propagate(psi, diag, field, duration, n, dt=None, *, t0=0.0, field_bound=0.0, freq_bound=0.0,
              method="split4", tol=1e-6, validate=True, min_dt=1e-7):
    """Integrate i/(2 pi) dpsi/dt = (diag + field(t) sum sigma_y) psi.

    ``psi`` may carry leading batch axes; ``field(t)`` then returns one value
    per batch row.  With ``validate`` the step is halved until halving it
    again changes no population by more than ``tol``.  Returns the final
    state and the step actually used.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if duration == 0:
        return np.array(psi, dtype=complex), 0.0
    if dt is None:
        dt = default_step(diag, n, field_bound, freq_bound)
    run = _METHODS[method]
    psi = np.asarray(psi, dtype=complex)
    steps = max(1, math.ceil(duration / dt - 1e-9))
    coarse = run(psi, diag, field, t0, duration, steps, n)
    if not validate:
        return coarse, duration / steps
    while True:
        fine = run(psi, diag, field, t0, duration, 2 * steps, n)
        err = float(np.max(np.abs(np.abs(fine) ** 2 - np.abs(coarse) ** 2)))
        if err < tol:
            return fine, duration / (2 * steps)
        steps *= 2
        if duration / steps < min_dt:
            raise StepSizeError(f"step size underflow at dt={duration / steps:.2e} ms (change {err:.2e})")
        coarse = fine


def _leaf_schedules(drive):
    segs = getattr(drive, "segments", None)
    if segs:
        out = []
        for s in segs:
            out.extend(_leaf_schedules(s))
        return out
    return [drive]


def evolve(state: SpinState, couplings: CouplingMatrix, drive, dt: float | None = None,
           tol: float = 1e-6, validate: bool = True) -> SpinState:
    """Evolve ``state`` under the Ising couplings plus the drive's transverse field.

    ``drive`` is a DriveSchedule (see ``ionspec.drive``); sequential segments
    are applied in order, each with its own clock starting at zero.  The
    integrator is the unitary fourth-order splitting; ``propagate`` also
    exposes classic RK4 for cross-checks.
    """
    kwargs = {"tol": tol, "validate": validate}
    psi = state.amplitudes
    n = state.n_spins
    diag = ising_diagonal(couplings)
    for leaf in _leaf_schedules(drive):
        psi, _ = propagate(psi, diag, leaf, leaf.duration, n, dt,
                           field_bound=leaf.field_bound(), freq_bound=leaf.max_frequency(), **kwargs)
    return SpinState(n, psi)


def propagate_exact(state: SpinState, couplings: CouplingMatrix, b: float, t: float) -> SpinState:
    """exp(-2 pi i H t)|psi> for constant field via the eigenbasis."""
    sol = diagonalize(couplings, b)
    c = sol.states.conj().T @ state.amplitudes
    return SpinState(state.n_spins, sol.states @ (np.exp(-2j * np.pi * sol.energies * t) * c))


# -- rotations and measurement axes -------------------------------------------

def rotation_operator(axis, angle: float) -> np.ndarray:
    n_hat = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n_hat)
    if norm == 0:
        raise ValueError("rotation axis has zero length")
    n_hat = n_hat / norm
    gen = n_hat[0] * SX + n_hat[1] * SY + n_hat[2] * SZ
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * gen


def rotate_global(state, axis, angle: float):
    """Apply exp(-i angle/2 sum_i n.sigma_i)."""
    psi, n = _as_array(state)
    u = rotation_operator(axis, angle)
    out = apply_product(psi, [u] * n, n)
    return SpinState(n, out) if isinstance(state, SpinState) else out


def rotation_to_x(axis) -> tuple[np.ndarray, float]:
    """Rotation (axis, angle) that carries the Bloch direction ``axis`` onto +x."""
    n_hat = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n_hat)
    if norm == 0:
        raise ValueError("measurement axis has zero length")
    n_hat = n_hat / norm
    x = np.array([1.0, 0.0, 0.0])
    cross = np.cross(n_hat, x)
    s = np.linalg.norm(cross)
    c = float(np.dot(n_hat, x))
    if s < 1e-15:
        return (np.array([0.0, 0.0, 1.0]), 0.0 if c > 0 else math.pi)
    return cross / s, math.atan2(s, c)


def populations_along(state, axis) -> np.ndarray:
    """Configuration probabilities when every spin is read out along ``axis``."""
    psi, n = _as_array(state)
    rot_axis, angle = rotation_to_x(axis)
    if angle != 0.0:
        psi = rotate_global(psi, rot_axis, angle)
    return np.abs(psi) ** 2


def axis_in_xy(phi: float) -> np.ndarray:
    return np.array([math.cos(phi), math.sin(phi), 0.0])


# -- reduced states -----------------------------------------------------------

def partial_trace(state, keep) -> np.ndarray:
    """Reduced density matrix of the spins in ``keep`` (kept in ascending order)."""
    psi, n = _as_array(state)
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be non-empty")
    if keep[0] < 0 or keep[-1] >= n:
        raise ValueError("keep indices out of range")
    rest = [i for i in range(n) if i not in keep]
    t = psi.reshape((2,) * n).transpose(keep + rest).reshape(2 ** len(keep), -1)
    return t @ t.conj().T


def reduce_density(rho: np.ndarray, keep) -> np.ndarray:
    n = int(round(math.log2(rho.shape[0])))
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise ValueError("keep set must be non-empty")
    rest = [i for i in range(n) if i not in keep]
    t = rho.reshape((2,) * (2 * n)).transpose(keep + rest + [n + k for k in keep] + [n + r for r in rest])
    dk, dr = 2 ** len(keep), 2 ** len(rest)
    return np.einsum("arbr->ab", t.reshape(dk, dr, dk, dr))
