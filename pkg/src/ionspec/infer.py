"""Coupling reconstruction from splittings, power-law fits and spectrum assembly."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .chain import CouplingMatrix, power_law_couplings
from .peaks import Splitting
from .quantum import config_label, differing_spins, flip, hamming, ising_diagonal, spin_signs


class RankError(ValueError):
    def __init__(self, unconstrained: list[tuple[int, int]], rank: int, needed: int):
        self.unconstrained = unconstrained
        super().__init__(
            f"design matrix rank {rank} < {needed}; unconstrained pairs: {unconstrained}"
        )


@dataclass
class SplittingSystem:
    n_spins: int
    design: np.ndarray  # rows x pairs, entries 0 or +-2
    response: np.ndarray  # kHz, signed to match the design rows
    sigmas: np.ndarray
    row_meta: list[tuple[int, int]]
    magnitudes: np.ndarray  # measured |dE|

    @property
    def weights(self) -> np.ndarray:
        return _weights(self.sigmas)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        n = self.n_spins
        return [(i, j) for i in range(n) for j in range(i + 1, n)]


def _weights(sigmas: np.ndarray) -> np.ndarray:
    s = np.asarray(sigmas, dtype=float)
    if not np.any(s > 0):
        return np.ones_like(s)
    floor = s[s > 0].min()
    return 1.0 / np.maximum(s, floor)


def design_row(initial: int, final: int, n: int) -> np.ndarray:
    """Row r with r . J = E(final) - E(initial) for a single flip."""
    diff = differing_spins(initial, final, n)
    if len(diff) != 1:
        raise ValueError(
            f"{config_label(initial, n)} -> {config_label(final, n)} is not a single flip"
        )
    k = diff[0]
    s = spin_signs(n)[initial].astype(float)
    row = np.zeros(n * (n - 1) // 2)
    col = 0
    for i in range(n):
        for j in range(i + 1, n):
            if k in (i, j):
                row[col] = -2.0 * s[i] * s[j]
            col += 1
    return row


def sign_prior(n: int, alpha: float = 1.0) -> CouplingMatrix:
    """All-positive J0/r**alpha profile used to fix splitting signs."""
    return power_law_couplings(n, 1.0, alpha)


def build_design_matrix(splittings: list[Splitting], n: int | None = None,
                        prior: CouplingMatrix | None = None) -> SplittingSystem:
    """Signed design matrix and response from measured splitting magnitudes.

    Each row is oriented so that the prior couplings predict a positive
    value; the response is then the measured magnitude.
    """
    if not splittings:
        raise ValueError("no splittings to build a design matrix from")
    n = splittings[0].n_spins if n is None else n
    prior = sign_prior(n) if prior is None else prior
    pv = prior.pair_vector()
    rows, meta = [], []
    for sp in splittings:
        row = design_row(sp.initial, sp.final, n)
        pred = row @ pv
        rows.append(row if pred >= 0 else -row)
        meta.append((sp.initial, sp.final))
    mags = np.array([abs(sp.delta_e) for sp in splittings])
    sig = np.array([sp.sigma for sp in splittings], dtype=float)
    return SplittingSystem(n, np.array(rows), mags.copy(), sig, meta, mags)


def unconstrained_pairs(design: np.ndarray, n: int, tol: float = 1e-9) -> list[tuple[int, int]]:
    _, s, vt = np.linalg.svd(design, full_matrices=True)
    rank = int(np.sum(s > tol * max(1.0, s.max(initial=0.0))))
    null = vt[rank:]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return [pairs[c] for c in range(len(pairs)) if null.size and np.abs(null[:, c]).max() > 1e-8]


@dataclass
class ReconstructedCouplings:
    values: CouplingMatrix
    stderrs: np.ndarray  # pair vector
    covariance: np.ndarray
    residuals: np.ndarray
    fit_j0: float = math.nan
    fit_alpha: float = math.nan
    alpha_stderr: float = math.nan
    sign_iterations: int = 0
    notes: list[str] = field(default_factory=list)

    def stderr_matrix(self) -> np.ndarray:
        return CouplingMatrix.from_pair_vector(self.values.n_ions, self.stderrs).values


def _weighted_solve(a, y, w, sigmas, covariance):
    sw = np.sqrt(w)
    aw = a * sw[:, None]
    x, *_ = np.linalg.lstsq(aw, y * sw, rcond=None)
    normal_inv = np.linalg.pinv(aw.T @ aw)
    resid = y - a @ x
    if covariance == "propagated":
        # exact linear propagation of the row errors through the estimator
        g = normal_inv @ (a.T * w)
        cov = (g * np.asarray(sigmas) ** 2) @ g.T
    elif covariance == "scaled":
        dof = max(len(y) - a.shape[1], 1)
        s2 = float(w @ resid**2) / dof
        cov = normal_inv * s2
    else:
        raise ValueError(f"unknown covariance mode {covariance!r}")
    return x, cov, resid


ALT_PRIOR_ALPHAS = (0.5, 2.0, 3.0)


def _orient(a: np.ndarray, pv: np.ndarray) -> np.ndarray:
    pred = a @ pv
    return np.where((pred >= 0)[:, None], a, -a)


def _resign(a, y, w, sigmas, covariance, resign, max_iter):
    a = a.copy()
    iters = 0
    x, cov, resid = _weighted_solve(a, y, w, sigmas, covariance)
    while resign and iters < max_iter:
        flipped = a @ x < 0
        if not np.any(flipped):
            break
        a[flipped] *= -1
        iters += 1
        x, cov, resid = _weighted_solve(a, y, w, sigmas, covariance)
    settled = not (resign and np.any(a @ x < 0))
    return a, x, cov, resid, iters, settled


def solve_couplings(system: SplittingSystem, covariance: str = "scaled",
                    resign: bool = True, max_iter: int = 10) -> ReconstructedCouplings:
    """Weighted least squares with weights 1/sigma per row.

    With ``resign`` the row orientation is re-derived from the current
    estimate until it stops changing, so a rough prior only has to get the
    ordering of levels right, not the couplings themselves.
    """
    n = system.n_spins
    a = system.design.copy()
    needed = n * (n - 1) // 2
    rank = np.linalg.matrix_rank(a) if a.size else 0
    if rank < needed:
        raise RankError(unconstrained_pairs(a, n), rank, needed)
    w = system.weights
    y = system.response
    notes = []
    starts = [a]
    if resign:
        # a single prior can steer the re-signing into a wrong fixed point when
        # the couplings fall off much faster or slower than it; restart from
        # a few other profiles and keep the best-fitting orientation
        for alpha in ALT_PRIOR_ALPHAS:
            starts.append(_orient(a, sign_prior(n, alpha).pair_vector()))
    best = None
    for start in starts:
        cand = _resign(start, y, w, system.sigmas, covariance, resign, max_iter)
        chi2 = float(w @ cand[3] ** 2)
        if best is None or chi2 < best[0] - 1e-12 * max(1.0, best[0]):
            best = (chi2, *cand)
    _, a, x, cov, resid, iters, settled = best
    if not settled:
        notes.append("row signs did not settle")
    if not np.any(system.sigmas > 0):
        cov = np.zeros_like(cov)
    system.design = a
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    out = ReconstructedCouplings(CouplingMatrix.from_pair_vector(n, x), err, cov, resid,
                                 sign_iterations=iters, notes=notes)
    if n >= 4:
        try:
            out.fit_j0, out.fit_alpha, out.alpha_stderr = fit_power_law(out.values, err)
        except ValueError as exc:
            out.notes.append(str(exc))
    return out


def separation_means(couplings: CouplingMatrix, stderrs=None):
    """Mean |J| and its standard error for each separation r = 1..N-1."""
    n = couplings.n_ions
    v = np.abs(couplings.values)
    e = None if stderrs is None else CouplingMatrix.from_pair_vector(n, stderrs).values
    r = np.arange(1, n)
    means = np.array([np.mean(np.diag(v, k)) for k in r])
    if e is None:
        errs = np.zeros_like(means)
    else:
        errs = np.array([math.sqrt(np.sum(np.diag(e, k) ** 2)) / (n - k) for k in r])
    return r, means, errs


def fit_power_law(couplings: CouplingMatrix, stderrs=None) -> tuple[float, float, float]:
    """J0 / r**alpha through the separation-averaged couplings (log-log LS)."""
    n = couplings.n_ions
    if n < 4:
        raise ValueError("power-law fit needs at least 4 ions (3 separations)")
    r, means, errs = separation_means(couplings, stderrs)
    if np.any(means <= 0):
        raise ValueError("separation-averaged coupling is not positive; log undefined")
    lx, ly = np.log(r), np.log(means)
    sig = errs / means
    if np.any(sig > 0):
        w = 1.0 / np.maximum(sig, sig[sig > 0].min()) ** 2
    else:
        w = np.ones_like(ly)
    a = np.column_stack([np.ones_like(lx), -lx])
    aw = a * np.sqrt(w)[:, None]
    coef, *_ = np.linalg.lstsq(aw, ly * np.sqrt(w), rcond=None)
    if np.any(sig > 0):
        cov = np.linalg.inv(aw.T @ aw)
        alpha_err = math.sqrt(cov[1, 1])
    else:
        alpha_err = 0.0
    return float(math.exp(coef[0])), float(coef[1]), alpha_err


def campaign_scans(n: int, symmetric: bool = False) -> list[int]:
    """Initial configurations for a full coupling campaign.

    The polarized state plus every single-defect state (N+1 scans); with
    left-right symmetric couplings defects come in mirror pairs, so only
    ceil(N/2) of them are needed.
    """
    top = 2**n - 1
    count = math.ceil(n / 2) if symmetric else n
    return [top] + [flip(top, i, n) for i in range(count)]


def longitudinal_shift(initial: int, final: int, n: int, bx: float) -> float:
    """Change of E(final) - E(initial) caused by a field bx * sum sigma_x."""
    k = differing_spins(initial, final, n)[0]
    s = spin_signs(n)[initial, k]
    return float(-2.0 * s * bx)


def resolve_sign(initial: int, final: int, n: int, magnitude: float, shifted_magnitude: float,
                 bx: float) -> float:
    """Signed E(final) - E(initial) from magnitudes measured without and with a longitudinal field."""
    shift = longitudinal_shift(initial, final, n, bx)
    plus = abs(abs(magnitude + shift) - shifted_magnitude)
    minus = abs(abs(-magnitude + shift) - shifted_magnitude)
    return magnitude if plus <= minus else -magnitude


def drifted(couplings: CouplingMatrix, fraction: float) -> CouplingMatrix:
    """Couplings scaled by (1 + fraction); used for a slow drift during a campaign."""
    return CouplingMatrix(couplings.values * (1.0 + fraction))


@dataclass
class Spectrum:
    n_spins: int
    reference: int
    energies: np.ndarray  # relative to reference, nan where unmeasurable
    stderrs: np.ndarray
    unmeasurable: list[int]
    cycle_residuals: np.ndarray  # per edge, measured minus fitted
    inconsistent_edges: list[tuple[int, int]]


def assemble_spectrum(edges: list[tuple[int, int, float, float]], n: int, reference: int,
                      tolerance_sigmas: float = 3.0) -> Spectrum:
    """Relative energies from signed splitting edges (a, b, E_b - E_a, sigma).

    Reachability is found breadth-first from the reference.  When cycles
    make the graph over-determined, energies are the weighted least-squares
    fit to all edges of the component; each edge's residual is recorded and
    flagged if it exceeds ``tolerance_sigmas`` of its error.
    """
    dim = 2**n
    adj: dict[int, list[int]] = {}
    for a, b, _, _ in edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)
    seen = {reference}
    queue = deque([reference])
    while queue:
        u = queue.popleft()
        for v in adj.get(u, []):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    nodes = sorted(seen - {reference})
    col = {c: k for k, c in enumerate(nodes)}
    energies = np.full(dim, np.nan)
    errs = np.full(dim, np.nan)
    energies[reference] = 0.0
    errs[reference] = 0.0
    used = [(a, b, d, s) for a, b, d, s in edges if a in seen and b in seen]
    resid = np.zeros(len(used))
    flagged = []
    if nodes:
        m = np.zeros((len(used), len(nodes)))
        y = np.zeros(len(used))
        sig = np.array([s for *_, s in used], dtype=float)
        for r, (a, b, d, _) in enumerate(used):
            if b != reference:
                m[r, col[b]] += 1.0
            if a != reference:
                m[r, col[a]] -= 1.0
            y[r] = d
        w = _weights(sig) ** 2
        sw = np.sqrt(w)
        x, *_ = np.linalg.lstsq(m * sw[:, None], y * sw, rcond=None)
        cov = np.linalg.pinv((m * w[:, None]).T @ m)
        if not np.any(sig > 0):
            cov = np.zeros_like(cov)
        energies[nodes] = x
        errs[nodes] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        resid = y - m @ x
        for r, (a, b, _, s) in enumerate(used):
            scale = tolerance_sigmas * s if s > 0 else 1e-9
            if abs(resid[r]) > scale:
                flagged.append((a, b))
    missing = [c for c in range(dim) if c not in seen]
    return Spectrum(n, reference, energies, errs, missing, resid, flagged)


def exact_splittings(couplings: CouplingMatrix, initial: int, finals=None) -> list[Splitting]:
    """Noise-free one-flip splitting magnitudes from the zero-field spectrum."""
    n = couplings.n_ions
    d = ising_diagonal(couplings)
    finals = [flip(initial, i, n) for i in range(n)] if finals is None else finals
    out = []
    for f in finals:
        if hamming(initial, f) != 1:
            raise ValueError("finals must be one-flip neighbours")
        out.append(Splitting(initial, f, n, float(abs(d[f] - d[initial])), 0.0))
    return out
