"""Active/inactive speaker classifiers, DET curves and output gating."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dsp import Waveform, as_samples

ATTENUATION_FLOOR_DB = -150.0
# score given to outputs that cannot be embedded (silent or sub-frame)
COSINE_FLOOR = -1.0


class DetUndefinedError(ValueError):
    pass


@dataclass(frozen=True)
class TrialScore:
    trial_id: str
    score: float
    ground_truth_active: bool


@dataclass(frozen=True)
class Decision:
    trial_id: str
    c: int


@dataclass(frozen=True, eq=False)
class DetCurve:
    thresholds: np.ndarray
    fa_rate: np.ndarray
    miss_rate: np.ndarray
    eer: float
    eer_threshold: float

    @property
    def points(self):
        return list(zip(self.thresholds.tolist(), self.fa_rate.tolist(), self.miss_rate.tolist()))


def attenuation(estimate, mixture) -> float:
    """Estimate-to-mixture energy ratio in dB, floored at -150 dB."""
    est, mix = as_samples(estimate), as_samples(mixture)
    if est.shape != mix.shape:
        raise ValueError(f"length mismatch: estimate {est.shape}, mixture {mix.shape}")
    mix_energy = float(np.dot(mix, mix))
    if mix_energy <= 0:
        raise ValueError("attenuation undefined for a zero mixture")
    est_energy = float(np.dot(est, est))
    if est_energy <= 0:
        return ATTENUATION_FLOOR_DB
    return max(10.0 * math.log10(est_energy / mix_energy), ATTENUATION_FLOOR_DB)


def classify(score: float, threshold: float, trial_id: str = "") -> Decision:
    # ties go to inactive
    return Decision(trial_id, int(score > threshold))


def gate(estimate: Waveform, decision: Decision | int) -> Waveform:
    c = decision.c if isinstance(decision, Decision) else int(decision)
    if c == 1:
        return estimate
    return Waveform.zeros(len(estimate), estimate.sample_rate_hz)


def _split(scores):
    s = np.array([t.score for t in scores], dtype=np.float64)
    active = np.array([bool(t.ground_truth_active) for t in scores])
    return s, active


def det_curve(scores: Sequence[TrialScore]) -> DetCurve:
    """Sweep thresholds over every distinct score plus -inf and +inf.

    At threshold ``t`` a trial is declared active iff ``score > t``. Points
    are ordered by increasing threshold. The EER is located between the last
    point with ``fa >= miss`` and the next one, by linear interpolation of both
    rates; the reported threshold is that of the nearer of the two points
    (the first one on an exact half-way split), substituting the finite
    neighbour when the nearer one is infinite.
    """
    s, active = _split(scores)
    n_act, n_inact = int(active.sum()), int((~active).sum())
    if n_act == 0 or n_inact == 0:
        raise DetUndefinedError("DET undefined: need at least one active and one inactive trial")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    thresholds = np.concatenate(([-np.inf], np.unique(s), [np.inf]))
    act_sorted = np.sort(s[active])
    inact_sorted = np.sort(s[~active])
    # count of scores <= t
    miss = np.searchsorted(act_sorted, thresholds, side="right") / n_act
    fa = (n_inact - np.searchsorted(inact_sorted, thresholds, side="right")) / n_inact
    d = fa - miss
    i = int(np.flatnonzero(d >= 0)[-1])
    if d[i] == 0 or i == len(d) - 1:
        eer, thr_idx = float(fa[i]), i
    else:
        alpha = d[i] / (d[i] - d[i + 1])
        fa_x = fa[i] + alpha * (fa[i + 1] - fa[i])
        miss_x = miss[i] + alpha * (miss[i + 1] - miss[i])
        eer = float(0.5 * (fa_x + miss_x))
        thr_idx = i if alpha <= 0.5 else i + 1
        if not np.isfinite(thresholds[thr_idx]):
            thr_idx = i + 1 if thr_idx == i else i
    return DetCurve(thresholds, fa, miss, eer, float(thresholds[thr_idx]))


def write_det_csv(path, curve: DetCurve):
    lines = ["threshold,fa_rate,miss_rate"]
    lines += [f"{t!r},{f!r},{m!r}" for t, f, m in curve.points]
    lines.append(f"eer,{curve.eer!r},{curve.eer_threshold!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_det_csv(path) -> DetCurve:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != "threshold,fa_rate,miss_rate" or not rows[-1].startswith("eer,"):
        raise ValueError(f"{path}: not a DET CSV")
    pts = np.array([[float(v) for v in r.split(",")] for r in rows[1:-1]])
    _, eer, thr = rows[-1].split(",")
    return DetCurve(pts[:, 0], pts[:, 1], pts[:, 2], float(eer), float(thr))
