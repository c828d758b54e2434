"""Evaluation protocol: extraction, scoring, thresholding and reporting.

Trials are processed independently (optionally on a thread pool) and then
aggregated in ``trial_id`` order, so results never depend on scheduling.
"""

from __future__ import annotations

import csv
import io
import json
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .detection import (
    COSINE_FLOOR,
    DetCurve,
    TrialScore,
    attenuation,
    classify,
    det_curve,
    write_det_csv,
)
from .dsp import write_wav
from .embedding import EmbedderConfig, EmbeddingUndefinedError, cosine, embed
from .losses import LossConfig, check_gradient, loss_active, loss_composite, loss_inactive
from .metrics import SdrConfig, TrialMetrics, attenuation_trace, fail_and_miss_rate, fail_rate, mean, sdr
from .scenarios import CorpusSpec, build_corpus, with_enrollment_count

CLASSIFIERS = ("att", "cos")
TRIAL_COLUMNS = ("trial_id", "active", "score_att", "score_cos", "decision",
                 "sdr_in", "sdr_out", "sdri", "sdri_after", "attenuation")
GRADIENT_TOLERANCE = 1e-4


def component_seed(seed: int, component: str) -> int:
    """Seed of a named component, derived from the single run seed."""
    ss = np.random.SeedSequence(seed % 2 ** 64, spawn_key=(zlib.crc32(component.encode()),))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ScoredTrial:
    trial_id: str
    active: bool
    attenuation_db: float
    score_cos: float
    sdr_in_db: float | None
    sdr_out_db: float | None


def cosine_score(estimate, enrollment, embed_cfg: EmbedderConfig = EmbedderConfig()) -> float:
    """Cosine between estimate and enrollment embeddings; -1 when the estimate cannot be embedded."""
    try:
        est = embed(estimate, embed_cfg)
    except EmbeddingUndefinedError:
        return COSINE_FLOOR
    return cosine(est, embed(enrollment, embed_cfg))


def score_trial(trial, estimate, embed_cfg=EmbedderConfig(), sdr_cfg=SdrConfig()) -> ScoredTrial:
    if len(estimate) != len(trial.mixture):
        raise ValueError(f"{trial.trial_id}: extractor returned {len(estimate)} samples, mixture has {len(trial.mixture)}")
    sdr_in = sdr_out = None
    if trial.active:
        sdr_in = sdr(trial.mixture, trial.target_reference, sdr_cfg)
        sdr_out = sdr(estimate, trial.target_reference, sdr_cfg)
    return ScoredTrial(
        trial.trial_id,
        trial.active,
        attenuation(estimate, trial.mixture),
        cosine_score(estimate, trial.enrollment, embed_cfg),
        sdr_in,
        sdr_out,
    )


def _score_of(t, classifier):
    return t.attenuation_db if classifier == "att" else t.score_cos


def det_for(items, classifier: str) -> DetCurve:
    return det_curve([TrialScore(t.trial_id, _score_of(t, classifier), t.active) for t in items])


def finalize(scored: Sequence[ScoredTrial], classifier: str = "cos", threshold: float | None = None,
             sdr_cfg: SdrConfig = SdrConfig()) -> tuple[list[TrialMetrics], dict[str, DetCurve], float]:
    """Pick thresholds, make decisions and fill in per-trial metrics.

    Each classifier uses the threshold at its own EER on these trials; an
    explicit ``threshold`` overrides the one of ``classifier``.
    """
    if classifier not in CLASSIFIERS:
        raise ValueError(f"classifier must be one of {CLASSIFIERS}")
    scored = sorted(scored, key=lambda t: t.trial_id)
    dets = {c: det_for(scored, c) for c in CLASSIFIERS}
    thresholds = {c: dets[c].eer_threshold for c in CLASSIFIERS}
    if threshold is not None:
        thresholds[classifier] = float(threshold)
    out = []
    for t in scored:
        d_att = classify(t.attenuation_db, thresholds["att"]).c
        d_cos = classify(t.score_cos, thresholds["cos"]).c
        c = d_att if classifier == "att" else d_cos
        extra = {}
        if t.active:
            sdri = t.sdr_out_db - t.sdr_in_db
            extra = dict(sdr_in_db=t.sdr_in_db, sdr_out_db=t.sdr_out_db, sdri_db=sdri,
                         sdri_after_db=sdri if c else 0.0 - t.sdr_in_db)
        out.append(TrialMetrics(t.trial_id, t.active, t.attenuation_db, t.score_cos, t.attenuation_db,
                                d_att, d_cos, c, fail_threshold_db=sdr_cfg.fail_threshold_db, **extra))
    return out, dets, thresholds[classifier]


def summarize(metrics: Sequence[TrialMetrics], classifier: str, threshold: float,
              threshold_source: str = "eer") -> dict:
    """Aggregate report: EER, SDRi before and after gating, Fail, Fail&Miss and attenuation means."""
    metrics = sorted(metrics, key=lambda t: t.trial_id)
    act = [t for t in metrics if t.active]
    inact = [t for t in metrics if not t.active]
    dets = {c: det_for(metrics, c) for c in CLASSIFIERS}
    return {
        "classifier": classifier,
        "threshold": threshold,
        "threshold_source": threshold_source,
        "n_trials": len(metrics),
        "n_active": len(act),
        "n_inactive": len(inact),
        "eer": dets[classifier].eer,
        "eer_att": dets["att"].eer,
        "eer_cos": dets["cos"].eer,
        "input_sdr_db": mean([t.sdr_in_db for t in act]),
        "sdri_before_db": mean([t.sdri_db for t in act]),
        "sdri_after_db": mean([t.sdri_after_db for t in act]),
        "fail": fail_rate(metrics),
        "fail_and_miss": fail_and_miss_rate(metrics),
        "miss_rate": sum(t.decision == 0 for t in act) / len(act),
        "false_alarm_rate": sum(t.decision == 1 for t in inact) / len(inact),
        "attenuation_mean_db": mean([t.attenuation_db for t in metrics]),
        "attenuation_active_mean_db": mean([t.attenuation_db for t in act]),
        "attenuation_inactive_mean_db": mean([t.attenuation_db for t in inact]),
    }


@dataclass(frozen=True, eq=False)
class EvalReport:
    metrics: list[TrialMetrics]
    dets: dict[str, DetCurve]
    summary: dict

    @property
    def det(self) -> DetCurve:
        return self.dets[self.summary["classifier"]]


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def evaluate(trials, extractor: Callable, classifier: str = "cos", threshold: float | None = None,
             embed_cfg: EmbedderConfig = EmbedderConfig(), sdr_cfg: SdrConfig = SdrConfig(),
             workers: int = 1, estimates_dir=None) -> EvalReport:
    """Run ``extractor`` on every trial and compute the full metric set.

    With ``estimates_dir`` each estimate is also written as
    ``<trial_id>.wav`` (float32), the layout read back by the external
    extractor.
    """
    if estimates_dir is not None:
        Path(estimates_dir).mkdir(parents=True, exist_ok=True)

    def run(trial):
        est = extractor(trial)
        if estimates_dir is not None:
            write_wav(Path(estimates_dir) / f"{trial.trial_id}.wav", est)
        return score_trial(trial, est, embed_cfg, sdr_cfg)

    scored = _map(run, trials, workers)
    metrics, dets, thr = finalize(scored, classifier, threshold, sdr_cfg)
    summary = summarize(metrics, classifier, thr, "eer" if threshold is None else "override")
    return EvalReport(metrics, dets, summary)


# --- files ------------------------------------------------------------------

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def trials_csv(metrics: Sequence[TrialMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for t in sorted(metrics, key=lambda t: t.trial_id):
        w.writerow([_fmt(v) for v in (t.trial_id, t.active, t.score_att, t.score_cos, t.decision, t.sdr_in_db,
                                      t.sdr_out_db, t.sdri_db, t.sdri_after_db, t.attenuation_db)])
    return buf.getvalue()


def read_trials_csv(path, classifier: str = "cos", fail_threshold_db: float = 1.0,
                    threshold: float | None = None) -> list[TrialMetrics]:
    """Load per-trial rows; the unselected classifier's decisions are recomputed at its EER threshold."""
    rows = list(csv.DictReader(io.StringIO(Path(path).read_text())))
    opt = lambda s: float(s) if s != "" else None  # noqa: E731
    scored = [ScoredTrial(r["trial_id"], r["active"] == "1", float(r["attenuation"]), float(r["score_cos"]),
                          opt(r["sdr_in"]), opt(r["sdr_out"])) for r in rows]
    metrics, _, _ = finalize(scored, classifier, threshold, SdrConfig(fail_threshold_db=fail_threshold_db))
    by_id = {r["trial_id"]: r for r in rows}
    out = []
    for t in metrics:
        r = by_id[t.trial_id]
        if int(r["decision"]) != t.decision:
            raise ValueError(f"{t.trial_id}: stored decision disagrees with the recomputed threshold")
        out.append(t)
    return out


def write_report(report: EvalReport, out_dir, config: dict | None = None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trials.csv").write_text(trials_csv(report.metrics))
    write_det_csv(out / "det.csv", report.det)
    for c, det in report.dets.items():
        write_det_csv(out / f"det_{c}.csv", det)
    (out / "report.json").write_text(json.dumps(report.summary, indent=2) + "\n")
    trace = ["trial_id,active,attenuation_db"]
    active = {t.trial_id: t.active for t in report.metrics}
    trace += [f"{tid},{int(active[tid])},{att!r}" for tid, att in attenuation_trace(report.metrics)]
    (out / "attenuation_trace.csv").write_text("\n".join(trace) + "\n")
    if config is not None:
        (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")


# --- experiments ------------------------------------------------------------

def sweep_enrollment(spec: CorpusSpec, counts: Sequence[int], extractor: Callable, classifier: str = "cos",
                     embed_cfg=EmbedderConfig(), sdr_cfg=SdrConfig(), workers: int = 1) -> list[dict]:
    """Re-evaluate the same mixtures with enrollments of 1..5 concatenated utterances."""
    rows = []
    for count in counts:
        trials = build_corpus(with_enrollment_count(spec, count), workers)
        rep = evaluate(trials, extractor, classifier, None, embed_cfg, sdr_cfg, workers)
        rows.append({
            "count": count,
            "mean_duration_s": mean([t.enrollment.duration_s for t in trials]),
            "sdri": rep.summary["sdri_before_db"],
            "eer": rep.summary["eer"],
        })
    return rows


def sweep_csv(rows) -> str:
    lines = ["count,mean_duration_s,sdri,eer"]
    lines += [f"{r['count']},{r['mean_duration_s']!r},{r['sdri']!r},{r['eer']!r}" for r in rows]
    return "\n".join(lines) + "\n"


def _random_points(rng, n_points, length):
    for _ in range(n_points):
        ref = rng.standard_normal(length) * rng.uniform(0.1, 2.0)
        est = ref + rng.standard_normal(length) * rng.uniform(0.01, 2.0) * np.std(ref)
        mix = ref + rng.standard_normal(length) * rng.uniform(0.1, 2.0)
        yield est, ref, mix


def loss_check(seed: int = 0, n_points: int = 1000, length: int = 64, cfg: LossConfig = LossConfig(),
               corrupt_gradient: bool = False) -> dict:
    """Finite-difference check of the three training losses at random points.

    ``corrupt_gradient`` scales every analytic gradient by 1.01 (fault
    injection for testing the failure path).
    """
    def wrap(op):
        if not corrupt_gradient:
            return op

        def bad(est, *args, **kw):
            v = op(est, *args, **kw)
            return type(v)(v.value, v.gradient * 1.01)
        return bad

    rng = np.random.default_rng(component_seed(seed, "losscheck"))
    worst = {"active": 0.0, "inactive": 0.0, "composite": 0.0}
    for i, (est, ref, mix) in enumerate(_random_points(rng, n_points, length)):
        worst["active"] = max(worst["active"], check_gradient(wrap(loss_active), est, ref, cfg))
        worst["inactive"] = max(worst["inactive"], check_gradient(wrap(loss_inactive), est - ref, mix, cfg))
        # alternate the two branches of the composite loss
        comp_ref = ref if i % 2 == 0 else None
        comp_est = est if i % 2 == 0 else est - ref
        worst["composite"] = max(worst["composite"], check_gradient(wrap(loss_composite), comp_est, comp_ref, mix, cfg))
    return {
        "seed": seed,
        "n_points": n_points,
        "length": length,
        "tau_active": cfg.tau_active,
        "tau_inactive": cfg.tau_inactive,
        "epsilon_floor": cfg.epsilon_floor,
        "tolerance": GRADIENT_TOLERANCE,
        "max_relative_error": worst,
        "passed": all(v < GRADIENT_TOLERANCE for v in worst.values()),
    }

