"""Linear ion chains: equilibrium, transverse modes and Ising couplings.

Positions are dimensionless, in units of the length scale l with
l**3 = e**2 / (4 pi eps0 M omega_z**2).  Frequencies are in kHz unless a
field name says MHz.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

YB171_MASS = 170.936323 * 1.66053906660e-27  # kg

MAX_NEWTON_ITER = 200


class ChainError(RuntimeError):
    """Raised when the chain geometry cannot be solved."""


class ResonanceError(ValueError):
    """Raised when the beatnote detuning sits on a motional mode."""

    def __init__(self, mode: int, mode_freq_khz: float, mu_khz: float, floor_khz: float):
        self.mode = mode
        self.mode_freq_khz = mode_freq_khz
        super().__init__(
            f"detuning mu={mu_khz:.3f} kHz is within {floor_khz:g} kHz of mode {mode} "
            f"({mode_freq_khz:.3f} kHz)"
        )


@dataclass(frozen=True)
class TrapConfig:
    n_ions: int
    omega_transverse: float  # MHz, COM transverse secular frequency
    omega_axial: float  # MHz
    carrier_rabi: tuple[float, ...] | float = 500.0  # kHz, per ion or uniform
    recoil_frequency: float = 18.0  # kHz
    detuning_mu: float = 4.9  # MHz
    ion_mass: float = YB171_MASS
    resonance_floor: float = 1.0  # kHz

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if not self.omega_axial < self.omega_transverse:
            raise ValueError("omega_axial must be below omega_transverse for a linear chain")
        if self.omega_axial <= 0:
            raise ValueError("omega_axial must be positive")
        if self.recoil_frequency <= 0:
            raise ValueError("recoil_frequency must be positive")
        rabi = np.broadcast_to(np.asarray(self.carrier_rabi, dtype=float), (self.n_ions,))
        if np.any(rabi <= 0):
            raise ValueError("carrier_rabi entries must be positive")
        object.__setattr__(self, "carrier_rabi", tuple(float(r) for r in rabi))

    @property
    def rabi(self) -> np.ndarray:
        return np.asarray(self.carrier_rabi)

    @property
    def length_scale(self) -> float:
        """Length unit l in metres."""
        e = 1.602176634e-19
        eps0 = 8.8541878128e-12
        wz = 2 * np.pi * self.omega_axial * 1e6
        return (e**2 / (4 * np.pi * eps0 * self.ion_mass * wz**2)) ** (1 / 3)


@dataclass(frozen=True)
class ChainModes:
    positions: np.ndarray
    mode_freqs: np.ndarray  # MHz, descending
    mode_matrix: np.ndarray  # b[i, m]


@dataclass(frozen=True)
class CouplingMatrix:
    values: np.ndarray  # kHz, symmetric, zero diagonal

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("coupling matrix must be square")
        if not np.allclose(v, v.T, rtol=0, atol=1e-12 * max(1.0, np.abs(v).max(initial=0))):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(v) != 0):
            raise ValueError("coupling matrix must have zero diagonal")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_ions(self) -> int:
        return self.values.shape[0]

    def pairs(self) -> list[tuple[int, int]]:
        n = self.n_ions
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    def pair_vector(self) -> np.ndarray:
        iu = np.triu_indices(self.n_ions, 1)
        return self.values[iu]

    @classmethod
    def from_pair_vector(cls, n: int, vec) -> "CouplingMatrix":
        m = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        m[iu] = vec
        return cls(m + m.T)

    def mean_pair(self) -> float:
        if self.n_ions < 2:
            return 0.0
        return float(np.mean(self.pair_vector()))

    def mean_site_total(self) -> float:
        """Average over ions of the summed coupling each ion feels."""
        return float(np.abs(self.values).sum(axis=1).mean())


def power_law_couplings(n: int, j0: float, alpha: float) -> CouplingMatrix:
    r = np.abs(np.subtract.outer(np.arange(n), np.arange(n))).astype(float)
    with np.errstate(divide="ignore"):
        v = np.where(r > 0, j0 / np.where(r > 0, r, 1.0) ** alpha, 0.0)
    return CouplingMatrix(v)


def _potential_grad_hess(u: np.ndarray):
    d = np.subtract.outer(u, u)
    np.fill_diagonal(d, 1.0)
    inv2 = np.sign(d) / d**2
    inv3 = 1.0 / np.abs(d) ** 3
    np.fill_diagonal(inv2, 0.0)
    np.fill_diagonal(inv3, 0.0)
    grad = u - inv2.sum(axis=1)
    hess = -2.0 * inv3
    np.fill_diagonal(hess, 1.0 + 2.0 * inv3.sum(axis=1))
    return grad, hess


def _potential(u: np.ndarray) -> float:
    d = np.abs(np.subtract.outer(u, u))
    iu = np.triu_indices(len(u), 1)
    return 0.5 * float(u @ u) + float(np.sum(1.0 / d[iu]))


def equilibrium_positions(trap: TrapConfig | int, tol: float = 1e-13) -> np.ndarray:
    """Dimensionless equilibrium positions of the ions along the trap axis.

    Damped Newton iteration on the harmonic + Coulomb potential, starting
    from an evenly spaced guess.
    """
    n = trap if isinstance(trap, int) else trap.n_ions
    if n < 1:
        raise ValueError("need at least one ion")
    if n == 1:
        return np.zeros(1)
    spacing = 2.018 / n**0.559
    u = (np.arange(n) - (n - 1) / 2) * spacing
    for _ in range(MAX_NEWTON_ITER):
        grad, hess = _potential_grad_hess(u)
        if np.max(np.abs(grad)) < tol:
            break
        step = np.linalg.solve(hess, -grad)
        e0 = _potential(u)
        lam = 1.0
        while lam > 1e-8:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0) and _potential(trial) <= e0 + 1e-14 * abs(e0):
                break
            lam *= 0.5
        u = trial
    grad, _ = _potential_grad_hess(u)
    res = float(np.max(np.abs(grad)))
    if res > 1e-12:
        raise ChainError(f"equilibrium solve did not converge: residual {res:.3e}")
    # enforce the mirror symmetry exactly
    return 0.5 * (u - u[::-1])


def transverse_modes(positions: np.ndarray, trap: TrapConfig) -> ChainModes:
    u = np.asarray(positions, dtype=float)
    n = len(u)
    beta2 = (trap.omega_transverse / trap.omega_axial) ** 2
    d = np.abs(np.subtract.outer(u, u))
    np.fill_diagonal(d, 1.0)
    inv3 = 1.0 / d**3
    np.fill_diagonal(inv3, 0.0)
    k = inv3.copy()
    np.fill_diagonal(k, beta2 - inv3.sum(axis=1))
    if not np.allclose(k, k.T):
        raise ChainError("transverse Hessian is not symmetric")
    evals, evecs = np.linalg.eigh(k)
    if np.any(evals <= 0):
        raise ChainError("transverse modes unstable (zigzag regime)")
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    for m in range(n):
        col = evecs[:, m]
        pivot = np.argmax(np.abs(col) > 1e-9)
        if col[pivot] < 0:
            evecs[:, m] = -col
    freqs = trap.omega_axial * np.sqrt(evals)
    return ChainModes(positions=u, mode_freqs=freqs, mode_matrix=evecs)


def compute_couplings(modes: ChainModes, trap: TrapConfig) -> CouplingMatrix:
    """Mode-sum Ising couplings J_ij in kHz."""
    n = len(modes.positions)
    if n < 2:
        return CouplingMatrix(np.zeros((n, n)))
    mu = trap.detuning_mu * 1e3
    w = modes.mode_freqs * 1e3
    for m, wm in enumerate(w):
        if abs(mu - wm) < trap.resonance_floor:
            raise ResonanceError(m, wm, mu, trap.resonance_floor)
    b = modes.mode_matrix
    rabi = trap.rabi
    j = (b / (mu**2 - w**2)) @ b.T
    j *= np.outer(rabi, rabi) * trap.recoil_frequency
    np.fill_diagonal(j, 0.0)
    return CouplingMatrix(0.5 * (j + j.T))


def chain_couplings(trap: TrapConfig) -> tuple[ChainModes, CouplingMatrix]:
    modes = transverse_modes(equilibrium_positions(trap), trap)
    return modes, compute_couplings(modes, trap)


@dataclass
class ValidityReport:
    ratios: np.ndarray  # eta_im * Omega_i / |mu - omega_m|
    excitation: np.ndarray  # ratios**2
    flagged_modes: list[int]
    detuning_in_eta_omega: float
    regime: str
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flagged_modes


def validity_check(modes: ChainModes, trap: TrapConfig, max_excitation: float = 0.1) -> ValidityReport:
    """Check that phonons are only virtually excited.

    The COM Lamb-Dicke factor used for the detuning figure includes the
    1/sqrt(N) mode amplitude, so ``detuning_in_eta_omega == 3`` means the
    COM excitation estimate is exactly 1/9.
    """
    n = len(modes.positions)
    mu = trap.detuning_mu * 1e3
    w = modes.mode_freqs * 1e3
    eta = modes.mode_matrix * np.sqrt(trap.recoil_frequency / w)[None, :]
    ratios = np.abs(eta) * trap.rabi[:, None] / np.abs(mu - w)[None, :]
    excitation = ratios**2
    flagged = [int(m) for m in range(n) if excitation[:, m].max() > max_excitation]
    eta_com = np.sqrt(trap.recoil_frequency / w[0]) / np.sqrt(n)
    scale = eta_com * trap.rabi.mean()
    det = (mu - w[0]) / scale if scale > 0 else np.inf
    notes = []
    if det < 0:
        regime = "below COM"
    elif np.isclose(det, 3.0, rtol=1e-6):
        regime = "lower operating edge"
        notes.append("detuning at 3 eta*Omega, the low end of the usual 3-4 eta*Omega window")
    elif det < 3.0:
        regime = "too close"
    elif det <= 4.0:
        regime = "operating window"
    else:
        regime = "far detuned"
    for m in flagged:
        notes.append(f"mode {m}: excitation estimate {excitation[:, m].max():.3f} exceeds {max_excitation:g}")
    return ValidityReport(ratios, excitation, flagged, float(det), regime, notes)
