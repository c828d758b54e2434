"""Signal containers, WAV I/O, STFT/iSTFT and mel filterbanks.

All containers are immutable; every function is pure.

STFT convention: the signal is zero-padded by ``frame_len // 2`` samples on
the left (center convention) and on the right by whatever is needed so that
``n_frames = 1 + ceil(len / hop)`` frames of length ``frame_len`` fit exactly.
Frame ``m`` therefore starts at original sample ``m * hop - frame_len // 2``.
The inverse uses weighted overlap-add normalised by the summed squared window,
which reconstructs exactly whenever ``frame_len / hop`` is an integer >= 2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SUPPORTED_RATES = (8000, 16000)


class WavError(ValueError):
    """Base class for WAV container problems."""


class UnsupportedChannelCountError(WavError):
    pass


class UnsupportedCodecError(WavError):
    pass


class MalformedWavError(WavError):
    pass


class ColaError(ValueError):
    """STFT configuration cannot be inverted exactly."""


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono signal with its sample rate.

    ``samples`` is stored as a read-only float64 copy.
    """

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("waveform contains NaN or Inf")
        if self.sample_rate_hz not in SUPPORTED_RATES:
            raise ValueError(f"unsupported sample rate {self.sample_rate_hz} Hz")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))

    def like(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate_hz)

    @classmethod
    def zeros(cls, n: int, sample_rate_hz: int) -> "Waveform":
        return cls(np.zeros(n), sample_rate_hz)


def as_samples(x) -> np.ndarray:
    """Return the sample array of a Waveform, or ``x`` itself as float64."""
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class StftConfig:
    frame_len: int = 512
    hop: int = 128
    window: str = "hann"

    def __post_init__(self):
        if self.window != "hann":
            raise ValueError(f"unsupported window {self.window!r}")
        if self.frame_len < 2 or self.frame_len & (self.frame_len - 1):
            raise ValueError(f"frame_len must be a power of two, got {self.frame_len}")
        if not 0 < self.hop <= self.frame_len:
            raise ValueError(f"hop must be in (0, frame_len], got {self.hop}")

    @property
    def n_bins(self) -> int:
        return self.frame_len // 2 + 1

    @property
    def is_cola(self) -> bool:
        return self.frame_len % self.hop == 0 and self.frame_len // self.hop >= 2

    def check_cola(self):
        if not self.is_cola:
            raise ColaError(
                f"frame_len={self.frame_len}, hop={self.hop} is not constant-overlap-add "
                "for a periodic hann window (need frame_len/hop integer >= 2)"
            )


def default_stft_config(sample_rate_hz: int) -> StftConfig:
    if sample_rate_hz == 8000:
        return StftConfig(256, 64)
    return StftConfig(512, 128)


def hann(n: int) -> np.ndarray:
    """Periodic hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    data: np.ndarray  # frames x bins, complex
    config: StftConfig
    origin_len: int
    sample_rate_hz: int

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def with_data(self, data) -> "Spectrogram":
        return Spectrogram(np.asarray(data), self.config, self.origin_len, self.sample_rate_hz)


def n_frames_for(n_samples: int, cfg: StftConfig) -> int:
    return 1 + -(-n_samples // cfg.hop)


def _frame(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = n_frames_for(len(x), cfg)
    total = cfg.frame_len + (n_frames - 1) * cfg.hop
    padded = np.zeros(total)
    off = cfg.frame_len // 2
    padded[off:off + len(x)] = x
    return sliding_window_view(padded, cfg.frame_len)[:: cfg.hop]


def stft(w: Waveform, cfg: StftConfig | None = None) -> Spectrogram:
    if len(w) == 0:
        raise ValueError("stft of an empty waveform")
    cfg = cfg or default_stft_config(w.sample_rate_hz)
    cfg.check_cola()
    frames = _frame(w.samples, cfg) * hann(cfg.frame_len)
    return Spectrogram(np.fft.rfft(frames, axis=1), cfg, len(w), w.sample_rate_hz)


def _overlap_add(frames: np.ndarray, cfg: StftConfig) -> np.ndarray:
    n_frames = frames.shape[0]
    total = cfg.frame_len + (n_frames - 1) * cfg.hop
    out = np.zeros(total)
    ratio = cfg.frame_len // cfg.hop
    for k in range(ratio):
        block = frames[:, k * cfg.hop:(k + 1) * cfg.hop]
        out[k * cfg.hop:k * cfg.hop + n_frames * cfg.hop] += block.reshape(-1)
    return out


def istft(s: Spectrogram) -> Waveform:
    cfg = s.config
    cfg.check_cola()
    if s.data.shape[1] != cfg.n_bins:
        raise ValueError(f"spectrogram has {s.data.shape[1]} bins, expected {cfg.n_bins}")
    frames = np.fft.irfft(s.data, n=cfg.frame_len, axis=1) * hann(cfg.frame_len)
    ola = _overlap_add(frames, cfg)
    env = _overlap_add(np.broadcast_to(hann(cfg.frame_len) ** 2, frames.shape), cfg)
    off = cfg.frame_len // 2
    sl = slice(off, off + s.origin_len)
    if np.any(env[sl] < 1e-8):
        raise ColaError("window envelope vanishes inside the signal support")
    return Waveform(ola[sl] / env[sl], s.sample_rate_hz)


def spectral_energy(s: Spectrogram) -> float:
    """Energy of the windowed frames measured in the frequency domain.

    One-sided bins are doubled except DC and Nyquist, and the sum is divided
    by ``frame_len``, so this equals the summed squared windowed samples.
    """
    p = np.abs(s.data) ** 2
    total = 2.0 * p.sum() - p[:, 0].sum() - p[:, -1].sum()
    return float(total / s.config.frame_len)


def overlap_gain(cfg: StftConfig) -> float:
    """Constant sum of squared shifted hann windows, valid for frame_len/hop >= 3."""
    if cfg.frame_len % cfg.hop or cfg.frame_len // cfg.hop < 3:
        raise ColaError("squared hann windows only sum to a constant for frame_len/hop >= 3")
    return 3.0 * cfg.frame_len / (8.0 * cfg.hop)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate_hz: int, frame_len: int, n_mels: int) -> np.ndarray:
    """Triangular filters on the HTK mel scale spanning 0..Nyquist.

    Filters have unit peak, so overlapping neighbours sum to at most one in
    every bin. Returns an ``(n_mels, frame_len // 2 + 1)`` matrix.
    """
    n_bins = frame_len // 2 + 1
    if n_mels < 8:
        raise ValueError(f"n_mels must be >= 8, got {n_mels}")
    if n_mels > n_bins:
        raise ValueError(f"n_mels={n_mels} larger than the {n_bins} available bins")
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), n_mels + 2))
    freqs = np.arange(n_bins) * sample_rate_hz / frame_len
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.max(axis=1) <= 0.0)
    if empty.size:
        raise ValueError(f"mel filters {empty.tolist()} cover no FFT bin; reduce n_mels")
    return fb


# --- WAV ------------------------------------------------------------------

_PCM, _FLOAT, _EXTENSIBLE = 1, 3, 0xFFFE


def read_wav(path) -> Waveform:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(raw):
        cid, size = raw[pos:pos + 4], struct.unpack("<I", raw[pos + 4:pos + 8])[0]
        body = raw[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedWavError(f"{path}: truncated {cid!r} chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or len(fmt) < 16:
        raise MalformedWavError(f"{path}: missing or short fmt chunk")
    if data is None:
        raise MalformedWavError(f"{path}: missing data chunk")
    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == _EXTENSIBLE:
        if len(fmt) < 40:
            raise MalformedWavError(f"{path}: short WAVE_FORMAT_EXTENSIBLE header")
        tag = struct.unpack("<H", fmt[24:26])[0]
    if channels != 1:
        raise UnsupportedChannelCountError(f"{path}: unsupported channel count {channels}")
    if (tag, bits) not in ((_PCM, 16), (_FLOAT, 32)):
        raise UnsupportedCodecError(f"{path}: unsupported codec (format tag {tag}, {bits} bits)")
    if block_align != bits // 8 or len(data) % block_align:
        raise MalformedWavError(f"{path}: data size does not match block alignment")
    if tag == _PCM:
        samples = np.frombuffer(data, dtype="<i2") / 32768.0
    else:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    return Waveform(samples, rate)


def write_wav(path, w: Waveform, fmt: str = "float32"):
    """Write mono WAV; ``fmt`` is ``"float32"`` or ``"pcm16"``."""
    if fmt == "float32":
        payload = w.samples.astype("<f4").tobytes()
        tag, bits = _FLOAT, 32
    elif fmt == "pcm16":
        q = np.clip(np.round(w.samples * 32768.0), -32768, 32767)
        payload = q.astype("<i2").tobytes()
        tag, bits = _PCM, 16
    else:
        raise ValueError(f"unknown WAV sample format {fmt!r}")
    block = bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, tag, 1, w.sample_rate_hz, w.sample_rate_hz * block, block, bits,
        b"data", len(payload),
    )
    Path(path).write_bytes(header + payload)
