"""Deterministic log-mel speaker embeddings and cosine scoring.

The embedding stands in for a trained auxiliary network: per-band statistics
of ``log(mel_energy + 1e-10)`` over all STFT frames. Scaling a waveform by
``g`` shifts every log-mel value by ``2 log g``, so embeddings are not
gain-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dsp import StftConfig, Waveform, default_stft_config, mel_filterbank, stft

LOG_GUARD = 1e-10


class EmbeddingUndefinedError(ValueError):
    pass


@dataclass(frozen=True)
class EmbedderConfig:
    n_mels: int = 24
    stats: str = "mean_plus_std"
    stft: StftConfig | None = None  # None: default for the waveform's rate

    def __post_init__(self):
        if self.stats not in ("mean_logmel", "mean_plus_std"):
            raise ValueError(f"unknown stats {self.stats!r}")

    @property
    def dim(self) -> int:
        return self.n_mels * (2 if self.stats == "mean_plus_std" else 1)


@dataclass(frozen=True, eq=False)
class Embedding:
    values: np.ndarray
    source_duration_s: float

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@lru_cache(maxsize=16)
def _filterbank(sample_rate_hz, frame_len, n_mels):
    fb = mel_filterbank(sample_rate_hz, frame_len, n_mels)
    fb.flags.writeable = False
    return fb


def embed(w: Waveform, cfg: EmbedderConfig = EmbedderConfig()) -> Embedding:
    scfg = cfg.stft or default_stft_config(w.sample_rate_hz)
    if len(w) < scfg.frame_len:
        raise EmbeddingUndefinedError(
            f"embedding undefined: {len(w)} samples is shorter than one {scfg.frame_len}-sample frame"
        )
    if not np.any(w.samples):
        raise EmbeddingUndefinedError("embedding undefined: waveform is identically zero")
    power = np.abs(stft(w, scfg).data) ** 2
    logmel = np.log(power @ _filterbank(w.sample_rate_hz, scfg.frame_len, cfg.n_mels).T + LOG_GUARD)
    parts = [logmel.mean(axis=0)]
    if cfg.stats == "mean_plus_std":
        parts.append(logmel.std(axis=0))
    return Embedding(np.concatenate(parts), w.duration_s)


def cosine(a: Embedding, b: Embedding) -> float:
    u, v = np.asarray(getattr(a, "values", a)), np.asarray(getattr(b, "values", b))
    if u.shape != v.shape:
        raise ValueError(f"embedding dimensions differ: {u.shape} vs {v.shape}")
    uu, vv = float(np.dot(u, u)), float(np.dot(v, v))
    if uu == 0 or vv == 0:
        raise ValueError("cosine undefined for a zero vector")
    # one square root of the product keeps cosine(a, a) exactly 1
    return float(np.clip(np.dot(u, v) / np.sqrt(uu * vv), -1.0, 1.0))
