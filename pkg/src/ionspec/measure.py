"""Finite-shot readout with per-ion detection errors, and its inversion."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np


class DetectionError(ValueError):
    pass


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)) and label >= 0:
        return int(label)
    return int.from_bytes(hashlib.sha256(str(label).encode()).digest()[:8], "little")


def rng_stream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for a task, keyed by the global seed and stable labels."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_key(x) for x in labels))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class MeasurementModel:
    repetitions: int = 1000
    eps_bright_to_dark: float = 0.02
    eps_dark_to_bright: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("eps_bright_to_dark", "eps_dark_to_bright"):
            eps = getattr(self, name)
            if not 0.0 <= eps < 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5), got {eps}")
        if self.repetitions < 0:
            raise ValueError("repetitions must be non-negative")

    @property
    def channel(self) -> np.ndarray:
        """Single-ion readout matrix, columns = true (dark, bright)."""
        ebd, edb = self.eps_bright_to_dark, self.eps_dark_to_bright
        return np.array([[1 - edb, ebd], [edb, 1 - ebd]])

    @classmethod
    def perfect(cls, repetitions: int = 1000, seed: int = 0) -> "MeasurementModel":
        return cls(repetitions, 0.0, 0.0, seed)


def _apply_per_ion(dist: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Apply the same 2x2 matrix to every ion of a distribution over 2**n configs."""
    n = int(round(math.log2(dist.shape[-1])))
    batch = dist.shape[:-1]
    t = dist.reshape(batch + (2,) * n)
    nb = len(batch)
    for axis in range(n):
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [nb + axis])), 0, nb + axis)
    return t.reshape(dist.shape)


def apply_detection_errors(probs, model: MeasurementModel) -> np.ndarray:
    return _apply_per_ion(np.asarray(probs, dtype=float), model.channel)


def sample_counts(probs, model: MeasurementModel, rng: np.random.Generator | None = None):
    """Empirical readout distribution after ``model.repetitions`` shots.

    Each shot draws a configuration and misreads ions independently; this is
    sampled directly as one multinomial draw from the error-convolved
    distribution, which has the same law.  Returns (frequencies, standard
    errors) with binomial errors sqrt(p(1-p)/R).
    """
    p = np.asarray(probs, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    r = model.repetitions
    if r <= 0:
        raise ValueError("repetitions must be positive to sample")
    if rng is None:
        rng = rng_stream(model.seed)
    p_obs = np.clip(apply_detection_errors(p, model), 0.0, None)
    counts = rng.multinomial(r, p_obs / p_obs.sum())
    freq = counts / r
    return freq, np.sqrt(freq * (1 - freq) / r)


@dataclass(frozen=True)
class CorrectedDistribution:
    probabilities: np.ndarray
    stderr: np.ndarray
    clipped_mass: float


def correct_detection_errors(observed, model: MeasurementModel) -> CorrectedDistribution:
    """Invert the per-ion readout channel on an observed distribution.

    Negative entries left by the inversion are clipped and the rest
    renormalized; the clipped weight is reported.  Errors are the multinomial
    covariance of the observed frequencies pushed through the inverse.
    """
    q_obs = np.asarray(observed, dtype=float)
    m = model.channel
    det = np.linalg.det(m)
    if abs(det) < 1e-12:
        raise DetectionError("readout channel is not invertible")
    minv = np.linalg.inv(m)
    q = _apply_per_ion(q_obs, minv)
    if model.repetitions > 0:
        second = _apply_per_ion(q_obs, minv**2)
        stderr = np.sqrt(np.clip(second - q**2, 0.0, None) / model.repetitions)
    else:
        stderr = np.zeros_like(q)
    negative = q < 0
    clipped = float(-q[negative].sum())
    if clipped > 0:
        q = np.where(negative, 0.0, q)
        q = q / q.sum()
    return CorrectedDistribution(q, stderr, clipped)


def functional_stderr(weights, observed, model: MeasurementModel, corrected: bool) -> float:
    """Standard error of sum_c weights[c] * p[c] estimated from one setting."""
    w = np.asarray(weights, dtype=float)
    if corrected:
        w = _apply_per_ion(w, np.linalg.inv(model.channel).T)
    p = np.asarray(observed, dtype=float)
    var = (w**2 @ p - (w @ p) ** 2) / model.repetitions
    return math.sqrt(max(var, 0.0))
