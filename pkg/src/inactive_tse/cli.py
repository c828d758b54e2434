"""Command-line harness: ``simulate``, ``evaluate``, ``sweep-enrollment``, ``losscheck``.

Every option can also come from ``--config file.json`` (a flat object whose
keys are the option names with underscores); explicit flags win over the
file, the file wins over built-in defaults. The resolved configuration is
written next to the outputs as ``config.json``.

Exit codes: 0 success, 1 usage or invalid configuration, 2 data error,
3 check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .detection import DetUndefinedError
from .dsp import WavError
from .embedding import EmbedderConfig
from .extractors import EXTRACTOR_NAMES, ExtractorError, IsAwareOracleConfig, get_extractor
from .harness import CLASSIFIERS, component_seed, evaluate, loss_check, sweep_csv, sweep_enrollment, write_report
from .losses import LossConfig
from .manifest import ManifestError, read_manifest, write_manifest
from .metrics import SdrConfig
from .scenarios import MAX_CONCAT, CorpusSpec, CorpusSpecError, build_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class UsageError(Exception):
    pass


class CheckFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return v


def _extractor(text):
    if text.startswith("external:") and len(text) > len("external:"):
        return text
    if text not in EXTRACTOR_NAMES[:-1]:
        raise ValueError(f"choose from {', '.join(EXTRACTOR_NAMES)}")
    return text


def _classifier(text):
    if text not in CLASSIFIERS:
        raise ValueError(f"choose from {', '.join(CLASSIFIERS)}")
    return text


def _optional_float(v):
    if v is None or (isinstance(v, str) and v.lower() in ("none", "null")):
        return None
    return float(v)


def _pair(v):
    lo, hi = v
    return [float(lo), float(hi)]


def _counts(v):
    out = [int(c) for c in v]
    if not out or any(not 1 <= c <= MAX_CONCAT for c in out):
        raise ValueError(f"counts must lie in 1..{MAX_CONCAT}")
    return out


def _positive(v):
    v = int(v)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _stats(v):
    if v not in ("mean_plus_std", "mean_logmel"):
        raise ValueError("choose mean_plus_std or mean_logmel")
    return v


def _irm_mode(v):
    if v not in ("confuse", "mask"):
        raise ValueError("choose confuse or mask")
    return v


# option name -> (converter, default) per command group
COMMON = {"seed": (_seed, 0), "out": (str, None), "workers": (_positive, 1)}
CORPUS = {
    "n_speakers": (int, 20),
    "n_mixtures": (int, 100),
    "snr_range_db": (_pair, [-5.0, 5.0]),
    "noise_snr_db": (_pair, [10.0, 20.0]),
    "enrollment_concat_count": (int, 1),
    "sample_rate_hz": (int, 16000),
    "training_is_fraction": (_optional_float, None),
}
SCORING = {
    "extractor": (_extractor, "irm"),
    "classifier": (_classifier, "cos"),
    "threshold": (_optional_float, None),
    "miss_prob": (float, 0.1),
    "false_alarm_prob": (float, 0.05),
    "residual_floor_db": (_optional_float, -100.0),
    "irm_inactive": (_irm_mode, "confuse"),
    "n_mels": (int, 24),
    "stats": (_stats, "mean_plus_std"),
    "filter_len": (_positive, 512),
}
OPTIONS = {
    "simulate": {**COMMON, **CORPUS},
    "evaluate": {**COMMON, **CORPUS, **SCORING, "manifest": (str, None), "write_estimates": (str, None)},
    "sweep-enrollment": {**COMMON, **CORPUS, **SCORING, "counts": (_counts, [1, 2, 3, 4, 5])},
    "losscheck": {
        **COMMON,
        "n_points": (_positive, 1000),
        "length": (_positive, 64),
        "tau_active": (float, 1e-3),
        "tau_inactive": (float, 1e-2),
        "corrupt_gradient": (bool, False),
    },
}
HELP = {
    "out": "output directory",
    "workers": "parallel worker processes; results do not depend on it",
    "n_speakers": "synthetic speakers in the pool",
    "n_mixtures": "two-talker mixtures; each yields three trials",
    "enrollment_concat_count": "enrollment utterances concatenated per trial (1..5)",
    "sample_rate_hz": "8000 or 16000",
    "training_is_fraction": "build one trial per mixture with this fraction inactive",
    "threshold": "fixed decision threshold instead of the EER operating point",
    "miss_prob": "is-aware: probability of suppressing an active target",
    "false_alarm_prob": "is-aware: probability of emitting a voice for an absent target",
    "residual_floor_db": "is-aware: level of the residual left on suppressed trials (none for silence)",
    "irm_inactive": "irm on absent targets: confuse (extract the closest voice) or mask",
    "n_mels": "mel bands of the embedder",
    "stats": "embedding statistics: mean_logmel or mean_plus_std",
    "filter_len": "distortion filter taps for SDR",
    "manifest": "score trials from this manifest instead of a generated corpus",
    "write_estimates": "also write one estimate WAV per trial into this directory",
    "n_points": "random points per loss",
    "length": "signal length of each point",
    "tau_active": "soft threshold of the active loss",
    "tau_inactive": "mixture weight of the inactive loss",
}
# execution details that never change results
NOT_RECORDED = ("out", "workers", "config")


def _add(p, name, help_text, **kw):
    p.add_argument("--" + name.replace("_", "-"), dest=name, help=help_text, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="inactive-tse", description="Inactive-speaker evaluation harness for target speech extraction.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "generate a synthetic corpus (manifest + WAVs)",
        "evaluate": "run an extractor, score both classifiers, write the report",
        "sweep-enrollment": "re-evaluate with 1..5 concatenated enrollment utterances",
        "losscheck": "finite-difference check of the training-loss gradients",
    }
    for cmd, options in OPTIONS.items():
        p = sub.add_parser(cmd, help=helps[cmd], argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with option values (flags override it)")
        for name in options:
            if name in ("snr_range_db", "noise_snr_db"):
                _add(p, name, "low high", nargs=2, type=float, metavar=("LO", "HI"))
            elif name == "counts":
                _add(p, name, "enrollment concatenation counts", nargs="+", type=int)
            elif name == "corrupt_gradient":
                p.add_argument("--corrupt-gradient", dest=name, action="store_true", help=argparse.SUPPRESS)
            elif name == "extractor":
                _add(p, name, "{" + "|".join(EXTRACTOR_NAMES) + "}")
            elif name == "classifier":
                _add(p, name, "{att|cos}")
            elif name == "seed":
                _add(p, name, "unsigned 64-bit run seed")
            else:
                _add(p, name, HELP.get(name))
    return parser


def resolve(command: str, args: dict) -> dict:
    """Defaults, then the config file, then explicit flags; all values converted and checked."""
    options = OPTIONS[command]
    merged = {name: default for name, (_, default) in options.items()}
    if "config" in args:
        try:
            file_cfg = json.loads(Path(args["config"]).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {args['config']}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args['config']} is not valid JSON: {exc.msg}") from None
        if not isinstance(file_cfg, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - set(options))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        merged.update(file_cfg)
    merged.update({k: v for k, v in args.items() if k in options})
    for name, (convert, default) in options.items():
        value = merged[name]
        if value is None and default is None:
            continue
        try:
            merged[name] = convert(value)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{name}: invalid value {value!r} ({exc})") from None
    if command in ("simulate", "sweep-enrollment") and merged["out"] is None:
        raise UsageError("--out is required")
    return merged


def _corpus_spec(cfg) -> CorpusSpec:
    return CorpusSpec(
        n_speakers=cfg["n_speakers"],
        n_mixtures=cfg["n_mixtures"],
        snr_range_db=tuple(cfg["snr_range_db"]),
        noise_snr_db=tuple(cfg["noise_snr_db"]),
        enrollment_concat_count=cfg["enrollment_concat_count"],
        seed=cfg["seed"],
        sample_rate_hz=cfg["sample_rate_hz"],
        training_is_fraction=cfg["training_is_fraction"],
    )


def _embed_cfg(cfg) -> EmbedderConfig:
    return EmbedderConfig(n_mels=cfg["n_mels"], stats=cfg["stats"])


def _extractor_fn(cfg):
    name = cfg["extractor"]
    if name == "irm":
        return get_extractor(name, inactive=cfg["irm_inactive"], embed_cfg=_embed_cfg(cfg))
    if name == "is-aware":
        try:
            oracle_cfg = IsAwareOracleConfig(cfg["miss_prob"], cfg["false_alarm_prob"], cfg["residual_floor_db"],
                                             component_seed(cfg["seed"], "is-aware"))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return get_extractor(name, cfg=oracle_cfg)
    return get_extractor(name)


def _recorded(command, cfg) -> dict:
    return {"command": command, **{k: v for k, v in cfg.items() if k not in NOT_RECORDED}}


def cmd_simulate(cfg) -> int:
    trials = build_corpus(_corpus_spec(cfg), cfg["workers"])
    out = Path(cfg["out"])
    path = write_manifest(trials, out)
    (out / "config.json").write_text(json.dumps(_recorded("simulate", cfg), indent=2, sort_keys=True) + "\n")
    n_act = sum(t.active for t in trials)
    print(f"wrote {len(trials)} trials ({n_act} active, {len(trials) - n_act} inactive) to {path}")
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    if cfg["manifest"] is not None:
        trials = read_manifest(cfg["manifest"])
    else:
        trials = build_corpus(_corpus_spec(cfg), cfg["workers"])
    report = evaluate(trials, _extractor_fn(cfg), cfg["classifier"], cfg["threshold"], _embed_cfg(cfg),
                      SdrConfig(filter_len=cfg["filter_len"]), cfg["workers"], cfg["write_estimates"])
    if cfg["out"] is not None:
        write_report(report, cfg["out"], _recorded("evaluate", cfg))
    print(json.dumps(report.summary, indent=2))
    return EXIT_OK


def cmd_sweep_enrollment(cfg) -> int:
    rows = sweep_enrollment(_corpus_spec(cfg), cfg["counts"], _extractor_fn(cfg), cfg["classifier"],
                            _embed_cfg(cfg), SdrConfig(filter_len=cfg["filter_len"]), cfg["workers"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    text = sweep_csv(rows)
    (out / "sweep.csv").write_text(text)
    (out / "config.json").write_text(json.dumps(_recorded("sweep-enrollment", cfg), indent=2, sort_keys=True) + "\n")
    print(text, end="")
    return EXIT_OK


def cmd_losscheck(cfg) -> int:
    try:
        loss_cfg = LossConfig(tau_active=cfg["tau_active"], tau_inactive=cfg["tau_inactive"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = loss_check(cfg["seed"], cfg["n_points"], cfg["length"], loss_cfg, cfg["corrupt_gradient"])
    text = json.dumps(result, indent=2)
    if cfg["out"] is not None:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "losscheck.json").write_text(text + "\n")
        (out / "config.json").write_text(json.dumps(_recorded("losscheck", cfg), indent=2, sort_keys=True) + "\n")
    print(text)
    if not result["passed"]:
        raise CheckFailed(f"gradient check failed: {result['max_relative_error']}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "sweep-enrollment": cmd_sweep_enrollment,
    "losscheck": cmd_losscheck,
}


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    try:
        cfg = resolve(command, args)
        return COMMANDS[command](cfg)
    except (UsageError, CorpusSpecError) as exc:
        print(f"inactive-tse {command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CheckFailed as exc:
        print(f"inactive-tse {command}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ManifestError, WavError, ExtractorError, DetUndefinedError, OSError, ValueError) as exc:
        print(f"inactive-tse {command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
