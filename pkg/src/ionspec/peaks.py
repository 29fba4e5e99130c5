"""Resonance fitting for scan columns: seeding, weighted LM fits, rejection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import least_squares

from .drive import ScanResult
from .quantum import hamming

WIDTH_GUESS = 0.15  # kHz
MAX_WIDTH = 0.6  # kHz
SEED_SIGMAS = 1.5
MIN_SNR = 1.5
MIN_POINTS = 6
FIT_WINDOW = None  # kHz half-width around the seed; None fits the whole column

REJECT_AMPLITUDE = "amplitude-unphysical"
REJECT_WIDTH = "background-drift"
REJECT_UNCERTAIN = "width-uncertain"
REJECT_SNR = "snr"


def lorentzian(x, x0, w, a, o):
    return a * w**2 / ((x - x0) ** 2 + w**2) + o


def sech_peak(x, x0, w, a, o):
    return a / np.cosh((x - x0) / w) + o


def sinc2_peak(x, x0, w, a, o):
    return a * np.sinc((x - x0) / (np.pi * w)) ** 2 + o


SHAPES = {"lorentzian": lorentzian, "sech": sech_peak, "sinc2": sinc2_peak}


@dataclass
class PeakFit:
    x0: float
    w: float
    a: float
    o: float
    stderr_x0: float
    stderr_w: float
    stderr_a: float
    stderr_o: float
    r_squared: float
    accepted: bool = False
    rejection_reasons: list[str] = field(default_factory=list)
    seed: float = math.nan
    shape: str = "lorentzian"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def apply_rejection_criteria(fit: PeakFit, mean_shot_noise: float) -> PeakFit:
    """Accept iff 0 < A < 1, w < 0.6 kHz, w > stderr_w / 2 and A > 1.5 S."""
    reasons = []
    if not 0.0 < fit.a < 1.0:
        reasons.append(REJECT_AMPLITUDE)
    if not fit.w < MAX_WIDTH:
        reasons.append(REJECT_WIDTH)
    if not fit.w > fit.stderr_w / 2:
        reasons.append(REJECT_UNCERTAIN)
    if not fit.a > MIN_SNR * mean_shot_noise:
        reasons.append(REJECT_SNR)
    return replace(fit, accepted=not reasons, rejection_reasons=reasons)


def _sigmas(err, n: int) -> np.ndarray:
    if err is None:
        return np.ones(n)
    e = np.asarray(err, dtype=float)
    positive = e[e > 0]
    if positive.size == 0:
        return np.ones(n)
    return np.maximum(e, positive.min())


def seed_points(y) -> np.ndarray:
    """Indices whose value sits more than 1.5 standard deviations from the mean."""
    y = np.asarray(y, dtype=float)
    sd = y.std()
    if sd == 0:
        return np.array([], dtype=int)
    return np.flatnonzero(np.abs(y - y.mean()) > SEED_SIGMAS * sd)


def _fit_one(x, y, sig, x0, shape, width_guess):
    model = SHAPES[shape]
    med = float(np.median(y))
    p0 = np.array([x0, width_guess, float(np.interp(x0, x, y)) - med, med])

    def resid(p):
        return (model(x, *p) - y) / sig

    try:
        with np.errstate(all="ignore"):
            sol = least_squares(resid, p0, method="lm", x_scale=np.array([width_guess, width_guess, 0.1, 0.1]))
    except (ValueError, np.linalg.LinAlgError):
        return None
    # an exhausted evaluation budget still yields a fit for the criteria to
    # judge (typically a runaway narrow peak); only non-finite results diverged
    if sol.status < 0 or not np.all(np.isfinite(sol.x)):
        return None
    p = sol.x.copy()
    p[1] = abs(p[1])
    dof = max(len(x) - 4, 1)
    chi2 = float(sol.fun @ sol.fun)
    jac = sol.jac
    try:
        cov = np.linalg.pinv(jac.T @ jac) * (chi2 / dof)
        errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        errs = np.full(4, np.inf)
    errs = np.where(np.isfinite(errs), errs, np.inf)
    wts = 1.0 / sig**2
    ybar = np.sum(wts * y) / wts.sum()
    ss_tot = float(np.sum(wts * (y - ybar) ** 2))
    r2 = 1.0 - chi2 / ss_tot if ss_tot > 0 else 0.0
    return PeakFit(*[float(v) for v in p], *[float(e) for e in errs], r2, shape=shape, seed=float(x0))


def fit_lorentzian(x, y, err=None, mean_shot_noise: float | None = None, shape: str = "lorentzian",
                   width_guess: float = WIDTH_GUESS, window: float | None = FIT_WINDOW) -> list[PeakFit]:
    """All seeded fits of one scan column, best first.

    A seed is every point more than 1.5 standard deviations from the column
    mean.  Each fit is judged by the rejection criteria; accepted fits come
    first, ordered by decreasing R^2, so ``fits[0]`` is the chosen peak when
    it is accepted.  Seeds whose solve fails are skipped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < MIN_POINTS:
        raise ValueError(f"need at least {MIN_POINTS} points to fit, got {len(x)}")
    sig = _sigmas(err, len(x))
    if mean_shot_noise is None:
        mean_shot_noise = 0.0 if err is None else float(np.mean(err))
    fits = []
    for k in seed_points(y):
        sel = slice(None)
        if window is not None:
            near = np.abs(x - x[k]) <= window
            if near.sum() >= MIN_POINTS:
                sel = near
        fit = _fit_one(x[sel], y[sel], sig[sel], x[k], shape, width_guess)
        if fit is not None:
            fits.append(apply_rejection_criteria(fit, mean_shot_noise))
    fits.sort(key=lambda f: (not f.accepted, -f.r_squared))
    return fits


def best_fit(fits: list[PeakFit]) -> PeakFit | None:
    return fits[0] if fits and fits[0].accepted else None


@dataclass(frozen=True)
class Splitting:
    initial: int
    final: int
    n_spins: int
    delta_e: float  # kHz, magnitude
    sigma: float  # kHz

    def to_dict(self) -> dict:
        return {"initial": self.initial, "final": self.final, "n_spins": self.n_spins,
                "delta_e": self.delta_e, "sigma": self.sigma}


def extract_splittings(scan: ScanResult, mean_shot_noise: float | None = None) -> list[Splitting]:
    """One splitting per tracked one-flip neighbor with an accepted fit."""
    out = []
    for state in scan.tracked_states:
        if hamming(state, scan.initial_config) != 1:
            raise ValueError("tracked states must be one-flip neighbours of the initial configuration")
        x, y, e = scan.column(state)
        noiseless = not np.any(e > 0)
        fits = fit_lorentzian(x, y, None if noiseless else e, mean_shot_noise)
        fit = best_fit(fits)
        if fit is not None:
            out.append(Splitting(scan.initial_config, state, scan.n_spins, fit.x0, fit.stderr_x0))
    return out
