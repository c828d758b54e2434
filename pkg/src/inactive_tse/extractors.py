"""Reference extractors standing in for a trained extraction network.

An extractor is any callable ``f(trial) -> Waveform`` returning a signal of
the mixture's length and rate. The implementations here cover the regimes
that matter for inactive-speaker evaluation: perfect output, oracle masking,
the classic failure modes, a statistical emulation of a system trained to
output silence, and estimates produced elsewhere and stored as WAV files.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .dsp import StftConfig, Waveform, default_stft_config, istft, read_wav, stft
from .embedding import EmbedderConfig, cosine, embed


class ExtractorError(ValueError):
    pass


class MissingEstimateError(ExtractorError):
    pass


class EstimateLengthError(ExtractorError):
    pass


class EstimateRateError(ExtractorError):
    pass


class Extractor(Protocol):
    def __call__(self, trial) -> Waveform: ...


def oracle_extract(trial) -> Waveform:
    if trial.active:
        return trial.target_reference
    return Waveform.zeros(len(trial.mixture), trial.sample_rate_hz)


def passthrough_extract(trial) -> Waveform:
    return trial.mixture


def zero_extract(trial) -> Waveform:
    return Waveform.zeros(len(trial.mixture), trial.sample_rate_hz)


def wrong_speaker_extract(trial) -> Waveform:
    if trial.interference_reference is None:
        raise ExtractorError(f"{trial.trial_id}: wrong-speaker extraction needs an interference reference")
    return trial.interference_reference


def ratio_mask(target_spec, *other_specs) -> np.ndarray:
    """``|T|^2 / (|T|^2 + sum |O|^2)`` per bin, 0 where every source is silent."""
    num = np.abs(target_spec) ** 2
    den = num + sum(np.abs(s) ** 2 for s in other_specs)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def _closest_source(trial, embed_cfg):
    enr = embed(trial.enrollment, embed_cfg)
    scores = [cosine(embed(src, embed_cfg), enr) for src in trial.source_references]
    return int(np.argmax(scores))


def irm_extract(
    trial,
    stft_cfg: StftConfig | None = None,
    inactive: str = "confuse",
    embed_cfg: EmbedderConfig = EmbedderConfig(),
) -> Waveform:
    """Ideal-ratio-mask extraction from the ground-truth source spectra.

    Active trials mask the mixture with ``|X_s|^2 / (|X_s|^2 + |X_i|^2 + |N|^2)``.
    For inactive trials ``inactive`` selects the behaviour:

    * ``"mask"``: the literal mask against the absent target, i.e. silence.
    * ``"confuse"``: behave like an extractor trained only on active cases,
      which always locks onto some voice. The mixture source whose embedding
      is closest to the enrollment is extracted with its own ideal mask.
    """
    cfg = stft_cfg or default_stft_config(trial.sample_rate_hz)
    mix = stft(trial.mixture, cfg)
    noise = stft(trial.noise, cfg).data
    if trial.active:
        mask = ratio_mask(stft(trial.target_reference, cfg).data, stft(trial.interference_reference, cfg).data, noise)
    elif inactive == "mask":
        mask = np.zeros(mix.data.shape)
    elif inactive == "confuse":
        if len(trial.source_references) < 1:
            raise ExtractorError(f"{trial.trial_id}: 'confuse' mode needs per-source references")
        pick = _closest_source(trial, embed_cfg)
        specs = [stft(s, cfg).data for s in trial.source_references]
        others = specs[:pick] + specs[pick + 1:]
        mask = ratio_mask(specs[pick], *others, noise)
    else:
        raise ValueError(f"unknown inactive mode {inactive!r}")
    return istft(mix.with_data(mask * mix.data))


@dataclass(frozen=True)
class IsAwareOracleConfig:
    """Parameters of the inactive-aware oracle.

    ``residual_floor_db`` is the level, relative to the mixture, of the
    near-silent output emitted for detected-inactive trials and for misses;
    ``None`` emits exact zeros. The level is snapped to the nearest power of
    two in amplitude so that all such outputs share one exact attenuation.
    """

    miss_prob: float = 0.0
    false_alarm_prob: float = 0.0
    residual_floor_db: float | None = -100.0
    seed: int = 0

    def __post_init__(self):
        for name in ("miss_prob", "false_alarm_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def residual_gain(self) -> float:
        if self.residual_floor_db is None:
            return 0.0
        return 2.0 ** round(self.residual_floor_db / (20.0 * math.log10(2.0)))


def _trial_uniform(trial_id: str, seed: int) -> float:
    ss = np.random.SeedSequence(seed % 2 ** 64, spawn_key=(zlib.crc32(trial_id.encode()),))
    return float(np.random.default_rng(ss).random())


def is_aware_oracle_extract(trial, cfg: IsAwareOracleConfig = IsAwareOracleConfig()) -> Waveform:
    """Emulate a system trained to output silence for inactive targets.

    Active: the target, except with probability ``miss_prob`` the near-silent
    residual (the mixture scaled to ``residual_floor_db``). Inactive: the
    residual, except with probability ``false_alarm_prob`` the interference.
    Each trial's draw depends only on ``(cfg.seed, trial_id)``.
    """
    u = _trial_uniform(trial.trial_id, cfg.seed)
    residual = trial.mixture.like(trial.mixture.samples * cfg.residual_gain)
    if trial.active:
        return residual if u < cfg.miss_prob else trial.target_reference
    return trial.interference_reference if u < cfg.false_alarm_prob else residual


def external_extract(trial, estimates_dir) -> Waveform:
    """Load ``<estimates_dir>/<trial_id>.wav`` and check it against the mixture."""
    path = Path(estimates_dir) / f"{trial.trial_id}.wav"
    if not path.is_file():
        raise MissingEstimateError(f"{trial.trial_id}: missing estimate file {path}")
    est = read_wav(path)
    if est.sample_rate_hz != trial.sample_rate_hz:
        raise EstimateRateError(
            f"{trial.trial_id}: rate mismatch ({est.sample_rate_hz} Hz vs mixture {trial.sample_rate_hz} Hz)"
        )
    if len(est) != len(trial.mixture):
        raise EstimateLengthError(f"{trial.trial_id}: length mismatch ({len(est)} vs mixture {len(trial.mixture)})")
    return est


EXTRACTOR_NAMES = ("oracle", "irm", "passthrough", "zero", "wrong", "is-aware", "external:<dir>")


def get_extractor(name: str, **params) -> Callable[..., Waveform]:
    """Resolve a command-line extractor name to a callable.

    ``params`` are forwarded: ``irm`` takes ``stft_cfg``/``inactive``/
    ``embed_cfg``; ``is-aware`` takes an ``IsAwareOracleConfig`` as ``cfg``.
    """
    if name.startswith("external:"):
        return partial(external_extract, estimates_dir=name.split(":", 1)[1])
    table = {
        "oracle": oracle_extract,
        "irm": irm_extract,
        "passthrough": passthrough_extract,
        "zero": zero_extract,
        "wrong": wrong_speaker_extract,
        "is-aware": is_aware_oracle_extract,
    }
    if name not in table:
        raise ValueError(f"unknown extractor {name!r}; choose from {', '.join(EXTRACTOR_NAMES)}")
    return partial(table[name], **params) if params else table[name]
