"""Extraction metrics: filtered-projection SDR, SDRi before/after detection,
failure accounting and attenuation traces.

Only active-speaker trials carry SDR quantities; inactive trials hold ``None``
in those fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .dsp import as_samples

DIAGONAL_LOADING = 1e-10


@dataclass(frozen=True)
class SdrConfig:
    filter_len: int = 512
    sdr_cap_db: float = 60.0
    fail_threshold_db: float = 1.0

    def __post_init__(self):
        if self.filter_len < 1:
            raise ValueError("filter_len must be >= 1")
        if not self.sdr_cap_db > self.fail_threshold_db:
            raise ValueError("sdr_cap_db must exceed fail_threshold_db")


def levinson_solve(first_col, b) -> np.ndarray:
    """Solve ``T x = b`` for symmetric positive-definite Toeplitz ``T``.

    ``T`` is given by its first column. O(n^2) Levinson recursion on the
    unit-diagonal normalised system.
    """
    col = np.asarray(first_col, dtype=np.float64)
    rhs = np.asarray(b, dtype=np.float64)
    n = col.shape[0]
    if rhs.shape != (n,):
        raise ValueError("right-hand side length must match the Toeplitz order")
    if col[0] <= 0:
        raise ValueError("Toeplitz diagonal must be positive")
    r = col[1:] / col[0]
    rhs = rhs / col[0]
    x = np.zeros(n)
    y = np.zeros(n)
    x[0] = rhs[0]
    if n == 1:
        return x
    y[0] = alpha = -r[0]
    beta = 1.0
    for k in range(1, n):
        beta *= 1.0 - alpha * alpha
        if beta <= 0:
            raise np.linalg.LinAlgError("Toeplitz matrix is not positive definite")
        mu = (rhs[k] - np.dot(r[:k], x[k - 1::-1])) / beta
        x[:k] += mu * y[k - 1::-1]
        x[k] = mu
        if k < n - 1:
            alpha = (-r[k] - np.dot(r[:k], y[k - 1::-1])) / beta
            y[:k] += alpha * y[k - 1::-1].copy()
            y[k] = alpha
    return x


def _correlations(est, ref, n_lags):
    n = est.shape[0] + n_lags
    nfft = 1 << (n - 1).bit_length()
    fr = np.fft.rfft(ref, nfft)
    auto = np.fft.irfft(fr * np.conj(fr), nfft)[:n_lags]
    cross = np.fft.irfft(np.fft.rfft(est, nfft) * np.conj(fr), nfft)[:n_lags]
    return auto, cross


def sdr(estimate, reference, cfg: SdrConfig = SdrConfig()) -> float:
    """Signal-to-distortion ratio allowing a ``filter_len``-tap FIR distortion.

    The reference is filtered by the least-squares FIR that best matches the
    estimate (normal equations solved by Levinson recursion with relative
    diagonal loading 1e-10); the result is clipped to ``+-sdr_cap_db``.
    """
    est, ref = as_samples(estimate), as_samples(reference)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: estimate {est.shape}, reference {ref.shape}")
    if not np.any(ref):
        raise ValueError("SDR undefined for a zero reference")
    if not np.any(est):
        return -cfg.sdr_cap_db
    taps = min(cfg.filter_len, ref.shape[0])
    auto, cross = _correlations(est, ref, taps)
    auto[0] *= 1.0 + DIAGONAL_LOADING
    h = levinson_solve(auto, cross)
    target = fftconvolve(ref, h)
    err = -target
    err[: est.shape[0]] += est
    t_energy, e_energy = float(np.dot(target, target)), float(np.dot(err, err))
    if e_energy <= 0:
        return cfg.sdr_cap_db
    if t_energy <= 0:
        return -cfg.sdr_cap_db
    return float(np.clip(10.0 * math.log10(t_energy / e_energy), -cfg.sdr_cap_db, cfg.sdr_cap_db))


def sdri(estimate, reference, mixture, cfg: SdrConfig = SdrConfig()) -> float:
    return sdr(estimate, reference, cfg) - sdr(mixture, reference, cfg)


def sdri_after(estimate, decision, reference, mixture, cfg: SdrConfig = SdrConfig()) -> float:
    """SDRi after gating: a trial gated to zero is scored with SDR_out = 0 dB."""
    c = getattr(decision, "c", decision)
    if c:
        return sdri(estimate, reference, mixture, cfg)
    return 0.0 - sdr(mixture, reference, cfg)


@dataclass(frozen=True)
class TrialMetrics:
    trial_id: str
    active: bool
    score_att: float
    score_cos: float
    attenuation_db: float
    decision_att: int
    decision_cos: int
    decision: int  # of the classifier selected for the report
    sdr_in_db: float | None = None
    sdr_out_db: float | None = None
    sdri_db: float | None = None
    sdri_after_db: float | None = None
    fail_threshold_db: float = 1.0

    @property
    def is_failure(self) -> bool:
        return self.active and self.sdri_db < self.fail_threshold_db

    @property
    def is_fail_or_miss(self) -> bool:
        return self.active and (self.is_failure or self.decision == 0)


def _active(trials: Iterable[TrialMetrics]) -> list[TrialMetrics]:
    act = [t for t in trials if t.active]
    if not act:
        raise ValueError("no active trials")
    return act


def mean(values: Sequence[float]) -> float:
    """Correctly rounded mean; independent of the order of ``values``."""
    if not values:
        raise ValueError("mean of an empty sequence")
    return math.fsum(values) / len(values)


def fail_rate(trials: Iterable[TrialMetrics]) -> float:
    act = _active(trials)
    return sum(t.is_failure for t in act) / len(act)


def fail_and_miss_rate(trials: Iterable[TrialMetrics]) -> float:
    act = _active(trials)
    return sum(t.is_fail_or_miss for t in act) / len(act)


def attenuation_trace(trials: Sequence[TrialMetrics]) -> list[tuple[str, float]]:
    """Active trials first, then inactive, each group in input order."""
    return [(t.trial_id, t.attenuation_db) for t in trials if t.active] + [
        (t.trial_id, t.attenuation_db) for t in trials if not t.active
    ]
