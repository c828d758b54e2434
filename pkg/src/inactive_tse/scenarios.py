"""Seeded synthetic corpora of two-speaker noisy mixtures with AS/IS enrollments.

Speakers are parametric voices (harmonic source at a jittered F0 shaped by
three formant resonators). Every random draw derives from ``CorpusSpec.seed``
through ``numpy.random.SeedSequence`` spawn keys, one key per (stream,
mixture, role, index), so mixtures never depend on the enrollment
configuration and trials can be generated in any order.

All stored signals are rounded to multiples of 2**-24 and kept below unit
magnitude. Sums of such signals are exact in float64 and representable in
float32, so ``mixture == (s1 + s2) + noise`` holds bit-exactly both in memory
and after a float32 WAV round trip.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .dsp import SUPPORTED_RATES, Waveform

F0_RANGE_HZ = (80.0, 300.0)
DEFAULT_F0_GAP_HZ = 10.0
UTTERANCE_RMS = 0.1
MIN_UTTERANCE_S = 0.5
MAX_CONCAT = 5
_GRID = 2.0 ** -24
_PEAK_LIMIT = 0.99

# spawn-key stream ids
_SPEAKERS, _MIXTURE, _ENROLL, _ROLES, _TRAIN = 1, 2, 3, 4, 5


class CorpusSpecError(ValueError):
    pass


def _key(text: str) -> int:
    return zlib.crc32(text.encode())


def _rng(seed: int, *spawn_key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=spawn_key))


def _derive_seed(seed: int, *spawn_key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=spawn_key).generate_state(1, np.uint64)[0])


def quantize(x: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(x) / _GRID) * _GRID


@dataclass(frozen=True)
class SyntheticSpeaker:
    speaker_id: str
    f0_hz: float
    formants_hz: tuple[float, float, float]
    bandwidths_hz: tuple[float, float, float]
    jitter: float  # relative F0 wobble (std of the slow contour)
    tilt: float  # source spectral slope: harmonic k has amplitude k**-tilt


@dataclass(frozen=True)
class CorpusSpec:
    n_speakers: int = 20
    n_mixtures: int = 100
    n_trials_per_mixture: int = 3
    snr_range_db: tuple[float, float] = (-5.0, 5.0)
    noise_snr_db: tuple[float, float] = (10.0, 20.0)
    enrollment_concat_count: int = 1
    seed: int = 0
    sample_rate_hz: int = 16000
    utterance_s: tuple[float, float] = (3.0, 3.5)
    enrollment_utterance_s: tuple[float, float] = (2.0, 4.0)
    # set (e.g. 0.1) for training-style corpora: one trial per mixture,
    # exactly round(fraction * n_mixtures) of them inactive
    training_is_fraction: float | None = None

    def __post_init__(self):
        for name in ("snr_range_db", "noise_snr_db", "utterance_s", "enrollment_utterance_s"):
            val = getattr(self, name)
            try:
                lo, hi = (float(v) for v in val)
            except (TypeError, ValueError):
                raise CorpusSpecError(f"{name}: expected a (low, high) pair, got {val!r}") from None
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise CorpusSpecError(f"{name}: need finite low <= high, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        if self.utterance_s[0] < MIN_UTTERANCE_S or self.enrollment_utterance_s[0] < MIN_UTTERANCE_S:
            raise CorpusSpecError(f"utterance_s: utterances must last at least {MIN_UTTERANCE_S} s")
        if self.n_speakers < 3:
            raise CorpusSpecError(f"n_speakers: need at least 3 (two mixed + one inactive), got {self.n_speakers}")
        if self.n_mixtures < 1:
            raise CorpusSpecError(f"n_mixtures: must be positive, got {self.n_mixtures}")
        if self.training_is_fraction is None and self.n_trials_per_mixture != 3:
            raise CorpusSpecError("n_trials_per_mixture: the test protocol uses exactly 3 (two AS + one IS)")
        if self.training_is_fraction is not None and not 0.0 <= self.training_is_fraction <= 1.0:
            raise CorpusSpecError("training_is_fraction: must lie in [0, 1]")
        if not 1 <= self.enrollment_concat_count <= MAX_CONCAT:
            raise CorpusSpecError(f"enrollment_concat_count: must be in 1..{MAX_CONCAT}")
        if not 0 <= self.seed < 2 ** 64:
            raise CorpusSpecError("seed: must be an unsigned 64-bit integer")
        if self.sample_rate_hz not in SUPPORTED_RATES:
            raise CorpusSpecError(f"sample_rate_hz: must be one of {SUPPORTED_RATES}")


@dataclass(frozen=True, eq=False)
class Trial:
    """One evaluation unit.

    ``target_reference is None`` encodes an inactive target (all-zero
    reference). ``source_references`` holds the individual speech sources of
    the mixture in ``mixture_speakers`` order, when known.
    """

    trial_id: str
    mixture: Waveform
    target_reference: Waveform | None
    interference_reference: Waveform
    noise: Waveform
    enrollment: Waveform
    target_speaker_id: str | None
    enrollment_speaker_id: str
    active: bool
    mixture_speakers: tuple[str, ...] = ()
    source_references: tuple[Waveform, ...] = field(default=())

    def __post_init__(self):
        if self.active != (self.target_reference is not None):
            raise ValueError(f"{self.trial_id}: active flag disagrees with target presence")
        if self.mixture_speakers and self.active != (self.enrollment_speaker_id in self.mixture_speakers):
            raise ValueError(f"{self.trial_id}: active flag disagrees with mixture speakers")
        n = len(self.mixture)
        for name in ("target_reference", "interference_reference", "noise"):
            w = getattr(self, name)
            if w is not None and len(w) != n:
                raise ValueError(f"{self.trial_id}: {name} length {len(w)} != mixture length {n}")

    @property
    def sample_rate_hz(self) -> int:
        return self.mixture.sample_rate_hz

    def additivity_residual(self) -> float:
        """Max |y - (x_s + x_i + n)|; exactly 0 for simulated trials."""
        total = self.interference_reference.samples + self.noise.samples
        if self.target_reference is not None:
            total = (self.target_reference.samples + self.interference_reference.samples) + self.noise.samples
        return float(np.max(np.abs(self.mixture.samples - total)))


def sample_speakers(spec: CorpusSpec) -> list[SyntheticSpeaker]:
    """Draw speakers with pairwise F0 gaps of at least 10 Hz.

    Only 23 speakers fit into 80-300 Hz at that spacing; larger sets use the
    widest achievable uniform gap ``220 / (n - 1)`` Hz.
    """
    n = spec.n_speakers
    if n < 3:
        raise CorpusSpecError(f"n_speakers: need at least 3, got {n}")
    rng = _rng(spec.seed, _SPEAKERS)
    lo, hi = F0_RANGE_HZ
    gap = min(DEFAULT_F0_GAP_HZ, (hi - lo) / (n - 1))
    slack = max(0.0, (hi - lo) - gap * (n - 1))
    f0s = lo + np.sort(rng.uniform(0.0, slack, n)) + gap * np.arange(n)
    f0s = f0s[rng.permutation(n)]
    speakers = []
    for i, f0 in enumerate(f0s):
        # shorter vocal tracts (higher formants) go with higher voices
        scale = 0.9 + 0.3 * (f0 - lo) / (hi - lo) + rng.normal(0.0, 0.05)
        formants = np.array([520.0, 1450.0, 2500.0]) * scale * rng.uniform([0.8, 0.8, 0.9], [1.2, 1.2, 1.1])
        formants = np.minimum(formants, [900.0, 2600.0, 3600.0])
        bws = rng.uniform([60.0, 90.0, 140.0], [120.0, 170.0, 260.0])
        speakers.append(
            SyntheticSpeaker(
                speaker_id=f"spk{i:03d}",
                f0_hz=float(f0),
                formants_hz=tuple(float(v) for v in formants),
                bandwidths_hz=tuple(float(v) for v in bws),
                jitter=float(rng.uniform(0.02, 0.06)),
                tilt=float(rng.uniform(2.0, 2.6)),
            )
        )
    return speakers


def _smooth_noise(rng, n_ctrl, n_out):
    ctrl = np.cumsum(rng.normal(0.0, 1.0, n_ctrl))
    ctrl -= ctrl.mean()
    ctrl /= max(ctrl.std(), 1e-12)
    return np.interp(np.linspace(0, n_ctrl - 1, n_out), np.arange(n_ctrl), ctrl)


def _resonators(formants, bandwidths, sr):
    a = np.array([1.0])
    for f, bw in zip(formants, bandwidths):
        r = math.exp(-math.pi * bw / sr)
        a = np.convolve(a, [1.0, -2.0 * r * math.cos(2.0 * math.pi * f / sr), r * r])
    return np.array([a.sum()]), a  # unit gain at DC


def synthesize_utterance(
    speaker: SyntheticSpeaker, duration_s: float, seed: int, sample_rate_hz: int = 16000
) -> Waveform:
    """Voiced utterance of ``speaker`` with RMS 0.1, fully determined by ``seed``.

    The F0 contour combines declination with a slow wobble of relative size
    ``speaker.jitter``; formants move by up to +-15% between syllables.
    """
    if duration_s < MIN_UTTERANCE_S:
        raise ValueError(f"utterance too short: {duration_s} s < {MIN_UTTERANCE_S} s")
    sr = sample_rate_hz
    n = int(round(duration_s * sr))
    rng = _rng(seed % 2 ** 64, _key(speaker.speaker_id))

    n_ctrl = int(duration_s * 8) + 2
    decline = np.linspace(rng.uniform(0.0, 0.06), -rng.uniform(0.0, 0.06), n)
    f0 = speaker.f0_hz * (1.0 + decline + speaker.jitter * _smooth_noise(rng, n_ctrl, n))
    cycles = np.cumsum(f0) / sr

    table_len = 4096
    n_harm = max(1, int(0.45 * sr / f0.max()))
    k = np.arange(1, n_harm + 1)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_harm)
    grid = 2.0 * np.pi * np.arange(table_len + 1) / table_len
    table = (k[:, None] ** -speaker.tilt * np.sin(k[:, None] * grid + phases[:, None])).sum(axis=0)
    pos = (cycles % 1.0) * table_len
    idx = pos.astype(np.int64)
    frac = pos - idx
    source = table[idx] * (1.0 - frac) + table[idx + 1] * frac

    # syllable segments with their own formant shift and loudness
    bounds = [0]
    while bounds[-1] < n:
        bounds.append(min(n, bounds[-1] + int(rng.uniform(0.12, 0.3) * sr)))
    out = np.empty(n)
    zi = np.zeros(6)
    centers, gains = [], []
    for start, stop in zip(bounds[:-1], bounds[1:]):
        shift = rng.uniform([0.85, 0.88, 0.95], [1.15, 1.12, 1.05])
        b, a = _resonators(np.array(speaker.formants_hz) * shift, speaker.bandwidths_hz, sr)
        out[start:stop], zi = lfilter(b, a, source[start:stop], zi=zi)
        centers.append(0.5 * (start + stop))
        gains.append(rng.uniform(0.45, 1.0))
    env = np.interp(np.arange(n), centers, gains)
    for start, stop in zip(bounds[:-1], bounds[1:]):
        env[start:stop] *= 0.6 + 0.4 * np.sin(np.pi * np.arange(stop - start) / (stop - start))
    out *= env
    out *= UTTERANCE_RMS / math.sqrt(np.mean(out * out))
    return Waveform(out, sr)


def _noise(rng, n):
    white = rng.normal(0.0, 1.0, n)
    return lfilter([1.0], [1.0, -0.85], white) + 0.3 * white


def _scale_to_db(x, ref_energy, db):
    return x * math.sqrt(ref_energy / (np.dot(x, x) * 10.0 ** (db / 10.0)))


def _mixture_speakers(spec: CorpusSpec, speakers, m: int):
    rng = _rng(spec.seed, _ROLES, m)
    a, b = rng.choice(len(speakers), size=2, replace=False)
    others = [i for i in range(len(speakers)) if i not in (a, b)]
    c = others[int(rng.integers(len(others)))]
    return speakers[a], speakers[b], speakers[c]


def make_mixture(spk_a: SyntheticSpeaker, spk_b: SyntheticSpeaker, spec: CorpusSpec, seed: int):
    """Full-overlap noisy two-speaker mixture.

    Returns ``(y, x_a, x_b, n)`` with ``y == (x_a + x_b) + n`` exactly. Both
    utterances are truncated to the shorter one; ``x_b`` is scaled so that the
    a-to-b energy ratio equals a level drawn from ``snr_range_db`` and the noise
    sits ``noise_snr_db`` below the speech sum.
    """
    if spk_a.speaker_id == spk_b.speaker_id:
        raise ValueError("mixture needs two distinct speakers")
    rng = _rng(seed % 2 ** 64, _MIXTURE)
    sr = spec.sample_rate_hz
    dur_a, dur_b = rng.uniform(*spec.utterance_s, size=2)
    xa = synthesize_utterance(spk_a, dur_a, _derive_seed(seed % 2 ** 64, _MIXTURE, 0), sr).samples
    xb = synthesize_utterance(spk_b, dur_b, _derive_seed(seed % 2 ** 64, _MIXTURE, 1), sr).samples
    n = min(len(xa), len(xb))
    xa, xb = xa[:n], xb[:n]
    xb = _scale_to_db(xb, np.dot(xa, xa), -rng.uniform(*spec.snr_range_db))
    speech = xa + xb
    noise = _scale_to_db(_noise(rng, n), np.dot(speech, speech), rng.uniform(*spec.noise_snr_db))
    peak = max(np.max(np.abs(v)) for v in (xa, xb, noise, speech, speech + noise))
    if peak > _PEAK_LIMIT / 2:
        # keep every partial sum of the quantised parts below unit magnitude
        g = _PEAK_LIMIT / (2 * peak)
        xa, xb, noise = xa * g, xb * g, noise * g
    xa, xb, noise = quantize(xa), quantize(xb), quantize(noise)
    y = (xa + xb) + noise
    return Waveform(y, sr), Waveform(xa, sr), Waveform(xb, sr), Waveform(noise, sr)


def make_enrollment(speaker: SyntheticSpeaker, spec: CorpusSpec, m: int, role: int, count: int) -> Waveform:
    """Concatenation of the first ``count`` enrollment utterances for (mixture, role).

    The underlying utterance sequence is fixed, so raising ``count`` only
    appends material.
    """
    parts = []
    for j in range(count):
        rng = _rng(spec.seed, _ENROLL, m, role, j)
        dur = rng.uniform(*spec.enrollment_utterance_s)
        utt = synthesize_utterance(speaker, dur, _derive_seed(spec.seed, _ENROLL, m, role, j), spec.sample_rate_hz)
        parts.append(quantize(utt.samples))
    return Waveform(np.concatenate(parts), spec.sample_rate_hz)


def utterance_seeds(spec: CorpusSpec, m: int) -> dict[str, list[int]]:
    """Seeds of every utterance used by mixture ``m`` (for disjointness checks)."""
    mix_seed = _derive_seed(spec.seed, _MIXTURE, m)
    return {
        "mixture": [_derive_seed(mix_seed, _MIXTURE, 0), _derive_seed(mix_seed, _MIXTURE, 1)],
        "enrollment": [
            _derive_seed(spec.seed, _ENROLL, m, role, j)
            for role in range(3)
            for j in range(spec.enrollment_concat_count)
        ],
    }


def _mixture_trials(spec: CorpusSpec, speakers, m: int) -> list[Trial]:
    spk_a, spk_b, spk_c = _mixture_speakers(spec, speakers, m)
    y, xa, xb, noise = make_mixture(spk_a, spk_b, spec, _derive_seed(spec.seed, _MIXTURE, m))
    ids = (spk_a.speaker_id, spk_b.speaker_id)
    common = dict(mixture=y, noise=noise, mixture_speakers=ids, source_references=(xa, xb))
    count = spec.enrollment_concat_count
    mid = f"m{m:04d}"
    if spec.training_is_fraction is not None:
        if _is_training_inactive(spec, m):
            return [Trial(f"{mid}-is", target_reference=None, interference_reference=Waveform(xa.samples + xb.samples, y.sample_rate_hz),
                          enrollment=make_enrollment(spk_c, spec, m, 2, count), target_speaker_id=None,
                          enrollment_speaker_id=spk_c.speaker_id, active=False, **common)]
        return [Trial(f"{mid}-s1", target_reference=xa, interference_reference=xb,
                      enrollment=make_enrollment(spk_a, spec, m, 0, count), target_speaker_id=spk_a.speaker_id,
                      enrollment_speaker_id=spk_a.speaker_id, active=True, **common)]
    speech = Waveform(xa.samples + xb.samples, y.sample_rate_hz)
    return [
        Trial(f"{mid}-s1", target_reference=xa, interference_reference=xb,
              enrollment=make_enrollment(spk_a, spec, m, 0, count), target_speaker_id=spk_a.speaker_id,
              enrollment_speaker_id=spk_a.speaker_id, active=True, **common),
        Trial(f"{mid}-s2", target_reference=xb, interference_reference=xa,
              enrollment=make_enrollment(spk_b, spec, m, 1, count), target_speaker_id=spk_b.speaker_id,
              enrollment_speaker_id=spk_b.speaker_id, active=True, **common),
        Trial(f"{mid}-is", target_reference=None, interference_reference=speech,
              enrollment=make_enrollment(spk_c, spec, m, 2, count), target_speaker_id=None,
              enrollment_speaker_id=spk_c.speaker_id, active=False, **common),
    ]


def _is_training_inactive(spec: CorpusSpec, m: int) -> bool:
    n_is = int(round(spec.training_is_fraction * spec.n_mixtures))
    order = _rng(spec.seed, _TRAIN).permutation(spec.n_mixtures)
    return bool(np.any(order[:n_is] == m))


def build_corpus(spec: CorpusSpec, workers: int = 1) -> list[Trial]:
    """All trials of the corpus, ordered by mixture then role.

    Test protocol: per mixture one trial per mixed speaker (active) and one
    with an enrollment from a third speaker (inactive). ``workers > 1``
    generates mixtures on a thread pool; the result is identical.
    """
    speakers = sample_speakers(spec)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            groups = list(pool.map(lambda m: _mixture_trials(spec, speakers, m), range(spec.n_mixtures)))
    else:
        groups = [_mixture_trials(spec, speakers, m) for m in range(spec.n_mixtures)]
    return [t for g in groups for t in g]


def with_enrollment_count(spec: CorpusSpec, count: int) -> CorpusSpec:
    return replace(spec, enrollment_concat_count=count)
