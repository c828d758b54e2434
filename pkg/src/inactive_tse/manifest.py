"""JSON-lines corpus manifests with WAV files in a sibling directory.

One line per trial::

    {"trial_id", "active", "mixture_wav", "target_wav" (null when inactive),
     "interference_wav", "noise_wav", "enrollment_wav", "target_speaker",
     "enrollment_speaker", "enrollment_duration_s"}

plus the optional ``mixture_speakers`` and ``source_wavs`` (individual
speech sources, needed by mask-based extractors on inactive trials). Paths
are relative to the manifest's directory. Signals shared between trials are
written once.
"""

from __future__ import annotations

import json
from pathlib import Path

from .dsp import WavError, read_wav, write_wav
from .scenarios import Trial

REQUIRED_FIELDS = (
    "trial_id", "active", "mixture_wav", "target_wav", "interference_wav", "noise_wav",
    "enrollment_wav", "target_speaker", "enrollment_speaker", "enrollment_duration_s",
)
WAV_DIR = "wav"


class ManifestError(ValueError):
    pass


def _mixture_id(trial_id: str) -> str:
    return trial_id.rsplit("-", 1)[0] if "-" in trial_id else trial_id


def write_manifest(trials, out_dir, name: str = "manifest.jsonl") -> Path:
    """Write WAVs (float32) under ``out_dir/wav`` and the manifest; returns its path."""
    out = Path(out_dir)
    (out / WAV_DIR).mkdir(parents=True, exist_ok=True)
    written: dict[int, str] = {}

    def put(w, stem):
        if w is None:
            return None
        if id(w) not in written:
            rel = f"{WAV_DIR}/{stem}.wav"
            write_wav(out / rel, w)
            written[id(w)] = rel
        return written[id(w)]

    lines = []
    for t in trials:
        mid = _mixture_id(t.trial_id)
        # name shared sources after the mixture before any trial claims them
        sources = [put(w, f"{mid}-src{i}") for i, w in enumerate(t.source_references)]
        rec = {
            "trial_id": t.trial_id,
            "active": t.active,
            "mixture_wav": put(t.mixture, f"{mid}-mix"),
            "target_wav": put(t.target_reference, f"{t.trial_id}-target"),
            "interference_wav": put(t.interference_reference, f"{t.trial_id}-interference"),
            "noise_wav": put(t.noise, f"{mid}-noise"),
            "enrollment_wav": put(t.enrollment, f"{t.trial_id}-enrollment"),
            "target_speaker": t.target_speaker_id,
            "enrollment_speaker": t.enrollment_speaker_id,
            "enrollment_duration_s": t.enrollment.duration_s,
        }
        if t.mixture_speakers:
            rec["mixture_speakers"] = list(t.mixture_speakers)
        if sources:
            rec["source_wavs"] = sources
        lines.append(json.dumps(rec))
    path = out / name
    path.write_text("\n".join(lines) + "\n")
    return path


def read_manifest(path) -> list[Trial]:
    """Load every trial of a manifest; errors carry the line and trial id."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"{path}: cannot read manifest ({exc.strerror})") from None
    base = path.parent
    cache: dict[str, object] = {}

    def load(rel, where):
        if rel is None:
            return None
        if rel not in cache:
            try:
                cache[rel] = read_wav(base / rel)
            except FileNotFoundError:
                raise ManifestError(f"{where}: missing WAV {rel}") from None
            except WavError as exc:
                raise ManifestError(f"{where}: {rel}: {exc}") from None
        return cache[rel]

    trials = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
        missing = [k for k in REQUIRED_FIELDS if k not in rec]
        where = f"{path}:{lineno} ({rec.get('trial_id', '?')})"
        if missing:
            raise ManifestError(f"{where}: missing fields {', '.join(missing)}")
        if not isinstance(rec["active"], bool):
            raise ManifestError(f"{where}: 'active' must be true or false")
        nulls = [k for k in REQUIRED_FIELDS if k.endswith("_wav") and k != "target_wav" and rec[k] is None]
        if nulls:
            raise ManifestError(f"{where}: {', '.join(nulls)} may not be null")
        sources = tuple(load(p, where) for p in rec.get("source_wavs", []))
        try:
            trials.append(Trial(
                trial_id=rec["trial_id"],
                mixture=load(rec["mixture_wav"], where),
                target_reference=load(rec["target_wav"], where),
                interference_reference=load(rec["interference_wav"], where),
                noise=load(rec["noise_wav"], where),
                enrollment=load(rec["enrollment_wav"], where),
                target_speaker_id=rec["target_speaker"],
                enrollment_speaker_id=rec["enrollment_speaker"],
                active=rec["active"],
                mixture_speakers=tuple(rec.get("mixture_speakers", ())),
                source_references=sources,
            ))
        except ValueError as exc:
            raise ManifestError(f"{where}: {exc}") from None
    if not trials:
        raise ManifestError(f"{path}: no trials")
    ids = [t.trial_id for t in trials]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"{path}: duplicate trial ids")
    return trials
