import hashlib
import math
from dataclasses import replace

import numpy as np
import pytest

from inactive_tse.dsp import read_wav, write_wav
from inactive_tse.scenarios import (
    CorpusSpec,
    CorpusSpecError,
    Trial,
    build_corpus,
    make_enrollment,
    make_mixture,
    sample_speakers,
    synthesize_utterance,
    utterance_seeds,
    with_enrollment_count,
)

GOLDEN_MIXTURE_SHA256 = "8a3014d0ff2903ff3ea645123855c232764eee419841f882d06a06152ea1f682"


def test_protocol_counts(small_corpus):
    n = 8
    assert len(small_corpus) == 3 * n
    assert sum(t.active for t in small_corpus) == 2 * n
    assert sum(not t.active for t in small_corpus) == n
    assert len({t.trial_id for t in small_corpus}) == 3 * n


def test_inactive_enrollment_speaker_not_in_mixture(default_corpus):
    for t in default_corpus:
        assert len(t.mixture_speakers) == 2
        if t.active:
            assert t.enrollment_speaker_id == t.target_speaker_id in t.mixture_speakers
        else:
            assert t.enrollment_speaker_id not in t.mixture_speakers
            assert t.target_reference is None and t.target_speaker_id is None


def test_additivity_exact(default_corpus):
    for t in default_corpus:
        assert t.additivity_residual() == 0.0
        xa, xb = t.source_references
        assert np.array_equal(t.mixture.samples, (xa.samples + xb.samples) + t.noise.samples)


def test_additivity_survives_float32_wav(tmp_path, small_corpus):
    t = small_corpus[0]
    parts = {}
    for name, w in (("y", t.mixture), ("a", t.source_references[0]), ("b", t.source_references[1]), ("n", t.noise)):
        write_wav(tmp_path / f"{name}.wav", w)
        parts[name] = read_wav(tmp_path / f"{name}.wav").samples
        assert np.array_equal(parts[name], w.samples)
    assert np.array_equal(parts["y"], (parts["a"] + parts["b"]) + parts["n"])


def test_golden_mixture_checksum():
    spec = CorpusSpec()
    sp = sample_speakers(spec)
    y, _, _, _ = make_mixture(sp[0], sp[1], spec, 1234)
    assert len(y) == 48619
    assert hashlib.sha256(y.samples.tobytes()).hexdigest() == GOLDEN_MIXTURE_SHA256


def test_equal_level_mixture():
    spec = CorpusSpec(snr_range_db=(0.0, 0.0))
    sp = sample_speakers(spec)
    for seed in range(10):
        _, a, b, _ = make_mixture(sp[2], sp[3], spec, seed)
        # level set exactly before rounding to the storage grid
        assert abs(10 * math.log10(a.energy() / b.energy())) < 1e-7


def test_mixture_levels_within_ranges():
    spec = CorpusSpec()
    sp = sample_speakers(spec)
    for seed in range(20):
        _, a, b, n = make_mixture(sp[4], sp[5], spec, seed)
        rel = 10 * math.log10(a.energy() / b.energy())
        nsr = 10 * math.log10((a.energy() + b.energy()) / n.energy())
        assert -5.0 - 1e-4 <= rel <= 5.0 + 1e-4
        # the speech sum includes the cross term, so allow a little slack
        assert 9.0 <= nsr <= 21.0


def test_identical_speakers_rejected():
    spec = CorpusSpec()
    sp = sample_speakers(spec)
    with pytest.raises(ValueError):
        make_mixture(sp[0], sp[0], spec, 1)


def test_utterance_rms_and_f0_peak():
    spec = CorpusSpec()
    for s in sample_speakers(spec):
        u = synthesize_utterance(s, 2.0, 5).samples
        assert abs(math.sqrt(np.mean(u * u)) - 0.1) < 1e-6
        mag = np.abs(np.fft.rfft(u * np.hanning(len(u))))
        peak = np.fft.rfftfreq(len(u), 1 / 16000)[np.argmax(mag)]
        # jitter and declination move the fundamental by a few percent
        assert abs(peak / s.f0_hz - 1.0) < 0.12


def test_utterance_deterministic_and_too_short():
    s = sample_speakers(CorpusSpec())[0]
    assert np.array_equal(synthesize_utterance(s, 1.0, 3).samples, synthesize_utterance(s, 1.0, 3).samples)
    assert not np.array_equal(synthesize_utterance(s, 1.0, 3).samples, synthesize_utterance(s, 1.0, 4).samples)
    with pytest.raises(ValueError):
        synthesize_utterance(s, 0.2, 3)


def test_speaker_f0_spacing():
    for n in (3, 20, 23):
        f0 = np.sort([s.f0_hz for s in sample_speakers(CorpusSpec(n_speakers=n))])
        assert np.all(np.diff(f0) >= 10.0 - 1e-9)
        assert f0[0] >= 80.0 and f0[-1] <= 300.0
    f0 = np.sort([s.f0_hz for s in sample_speakers(CorpusSpec(n_speakers=40))])
    assert np.all(np.diff(f0) >= 220.0 / 39 - 1e-9)


def test_spec_errors_name_the_field():
    cases = {
        "snr_range_db": dict(snr_range_db=(5.0, -5.0)),
        "noise_snr_db": dict(noise_snr_db=(1.0,)),
        "n_speakers": dict(n_speakers=2),
        "n_mixtures": dict(n_mixtures=0),
        "enrollment_concat_count": dict(enrollment_concat_count=6),
        "sample_rate_hz": dict(sample_rate_hz=44100),
        "seed": dict(seed=-1),
        "n_trials_per_mixture": dict(n_trials_per_mixture=4),
    }
    for field, kw in cases.items():
        with pytest.raises(CorpusSpecError, match=field):
            CorpusSpec(**kw)


def test_corpus_is_pure_and_parallel_safe():
    spec = CorpusSpec(n_mixtures=6, seed=77)
    a, b, c = build_corpus(spec), build_corpus(spec), build_corpus(spec, workers=4)
    for x, y, z in zip(a, b, c):
        assert x.trial_id == y.trial_id == z.trial_id
        for name in ("mixture", "noise", "enrollment", "interference_reference"):
            assert getattr(x, name).samples.tobytes() == getattr(y, name).samples.tobytes()
            assert getattr(x, name).samples.tobytes() == getattr(z, name).samples.tobytes()


def test_different_seeds_differ():
    a = build_corpus(CorpusSpec(n_mixtures=1, seed=1))
    b = build_corpus(CorpusSpec(n_mixtures=1, seed=2))
    assert not np.array_equal(a[0].mixture.samples[:100], b[0].mixture.samples[:100])


def test_enrollment_concatenation():
    spec = CorpusSpec(n_mixtures=40)
    one = build_corpus(spec)
    three = build_corpus(with_enrollment_count(spec, 3))
    d1 = np.mean([t.enrollment.duration_s for t in one])
    d3 = np.mean([t.enrollment.duration_s for t in three])
    assert abs(d3 / d1 - 3.0) < 0.3
    for a, b in zip(one, three):
        # only the enrollment changes, and it grows by appending
        assert np.array_equal(a.mixture.samples, b.mixture.samples)
        assert np.array_equal(b.enrollment.samples[:len(a.enrollment)], a.enrollment.samples)


def test_enrollment_and_mixture_utterances_are_distinct():
    spec = CorpusSpec(enrollment_concat_count=5)
    for m in range(20):
        seeds = utterance_seeds(spec, m)
        assert not set(seeds["mixture"]) & set(seeds["enrollment"])
        assert len(set(seeds["enrollment"])) == 15


def test_make_enrollment_length():
    spec = CorpusSpec()
    s = sample_speakers(spec)[0]
    e = make_enrollment(s, spec, 0, 0, 2)
    assert 4.0 <= e.duration_s <= 8.0


def test_training_style_fraction():
    spec = CorpusSpec(n_mixtures=50, training_is_fraction=0.1)
    trials = build_corpus(spec)
    assert len(trials) == 50
    assert sum(not t.active for t in trials) == 5
    for t in trials:
        assert t.additivity_residual() == 0.0
    with pytest.raises(CorpusSpecError, match="training_is_fraction"):
        replace(spec, training_is_fraction=1.5)


def test_trial_consistency_checks(small_corpus):
    t = small_corpus[0]
    with pytest.raises(ValueError, match="active flag"):
        Trial(t.trial_id, t.mixture, None, t.interference_reference, t.noise, t.enrollment, None,
              t.enrollment_speaker_id, True)
    short = t.mixture.like(t.mixture.samples[:-1])
    with pytest.raises(ValueError, match="length"):
        Trial(t.trial_id, t.mixture, short, t.interference_reference, t.noise, t.enrollment, None,
              t.enrollment_speaker_id, True)
