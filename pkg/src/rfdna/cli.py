"""Command-line harness: `rfdna run-est-compare` and `rfdna run-classify`.

Settings come from an optional key=value config file ([experiment],
[channel], [radio:<id>] sections); command-line flags override it.
"""

from __future__ import annotations

import argparse
import configparser
import sys

from .channel import SHIPPED_PROFILES, parse_channel_profile
from .harness import (ExperimentConfig, run_classification_experiment,
                      run_estimator_comparison)
from .signal_model import REFERENCE_RADIOS, emitter_profile_from_mapping

_FINGERPRINT_ALIASES = {"mag": "magnitude", "magnitude": "magnitude", "phase": "phase"}

PAPER_SCALE = {"n_signals_per_radio": 2000, "n_noise_realizations": 10,
               "n_estimation_preambles": 4000}


def parse_snr_range(text: str) -> tuple:
    """lo:step:hi (inclusive), or a comma-separated list of dB values."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"SNR range must be lo:step:hi, got {text!r}")
        lo, step, hi = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ValueError(f"bad SNR range {text!r}")
        grid = []
        value = lo
        while value <= hi + 1e-9:
            grid.append(round(value, 6))
            value += step
        return tuple(grid)
    return tuple(float(p) for p in text.split(","))


def load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    settings = {}
    if parser.has_section("experiment"):
        settings.update(parser["experiment"])
    radios = []
    for section in parser.sections():
        if section.startswith("radio:"):
            radios.append(emitter_profile_from_mapping(section.split(":", 1)[1],
                                                       parser[section]))
    if radios:
        settings["_radios"] = tuple(radios)
    if parser.has_section("channel") and "profile" in parser["channel"]:
        settings["_channel_profile"] = parse_channel_profile(parser["channel"]["profile"])
    return settings


def _resolve_channel(name: str):
    name = name.lower()
    if name == "none":
        return None
    if name in SHIPPED_PROFILES:
        return SHIPPED_PROFILES[name]
    raise ValueError(f"unknown channel {name!r}; expected l2, l3, l5, or none")


def build_config(args) -> ExperimentConfig:
    settings = load_config_file(args.config) if args.config else {}

    def setting(key, cast, default):
        return cast(settings[key]) if key in settings else default

    kwargs = dict(
        radios=settings.get("_radios", REFERENCE_RADIOS),
        snr_grid=parse_snr_range(settings["snr"]) if "snr" in settings
                 else ExperimentConfig.__dataclass_fields__["snr_grid"].default,
        n_noise_realizations=setting("n_noise_realizations", int, 3),
        n_signals_per_radio=setting("n_signals_per_radio", int, 400),
        n_estimation_preambles=setting("n_estimation_preambles", int, 200),
        train_fraction=setting("train_fraction", float, 0.5),
        k_folds=setting("k_folds", int, 5),
        estimator=setting("estimator", str, "nm"),
        equalizer=setting("equalizer", str, "mmse"),
        fingerprint_kind=setting("fingerprint", str, "magnitude"),
        classifier=setting("classifier", str, "mdaml"),
        n_candidates=setting("n_candidates", int, 20),
        master_seed=setting("seed", int, 0),
        workers=setting("workers", int, 1),
    )
    if "mda_regularization" in settings:
        kwargs["mda_regularization"] = float(settings["mda_regularization"])
    if "_channel_profile" in settings:
        kwargs["channel_profile"] = settings["_channel_profile"]
    elif "channel" in settings:
        kwargs["channel_profile"] = _resolve_channel(settings["channel"])

    if args.snr:
        kwargs["snr_grid"] = parse_snr_range(args.snr)
    if args.estimator:
        kwargs["estimator"] = args.estimator
    if args.equalizer:
        kwargs["equalizer"] = args.equalizer
    if args.fingerprint:
        kwargs["fingerprint_kind"] = _FINGERPRINT_ALIASES[args.fingerprint]
    if args.classifier:
        kwargs["classifier"] = args.classifier
    if args.channel:
        kwargs["channel_profile"] = _resolve_channel(args.channel)
    if args.seed is not None:
        kwargs["master_seed"] = args.seed
    if args.workers is not None:
        kwargs["workers"] = args.workers
    if args.paper_scale:
        kwargs.update(PAPER_SCALE)
    return ExperimentConfig(**kwargs)


def _add_common(sub):
    sub.add_argument("--config", help="key=value config file")
    sub.add_argument("--out", required=True, help="output directory for CSV results")
    sub.add_argument("--estimator", choices=("ls", "mmse", "nm"))
    sub.add_argument("--equalizer", choices=("zf", "mmse"))
    sub.add_argument("--fingerprint", choices=("mag", "phase"))
    sub.add_argument("--classifier", choices=("mdaml", "grlvqi"))
    sub.add_argument("--channel", choices=("l2", "l3", "l5", "none"))
    sub.add_argument("--snr", help="SNR grid as lo:step:hi or a comma list (dB)")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--paper-scale", action="store_true",
                     help="full-size protocol (slow); default is desk scale")
    sub.add_argument("--workers", type=int, help="worker processes (default 1)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rfdna",
        description="RF fingerprinting experiments over Rayleigh fading channels")
    commands = parser.add_subparsers(dest="command", required=True)
    _add_common(commands.add_parser(
        "run-est-compare", help="squared-error comparison of the LS/MMSE/NM estimators"))
    _add_common(commands.add_parser(
        "run-classify", help="radio classification accuracy versus SNR"))
    args = parser.parse_args(argv)

    try:
        cfg = build_config(args)
    except (ValueError, KeyError) as exc:
        parser.error(str(exc))

    if args.command == "run-est-compare":
        rows = run_estimator_comparison(cfg, args.out)
        for kind, snr, err, n in rows:
            print(f"{kind:5s} snr={snr:5.1f} dB  mean_sq_err={err:.6g}  (n={n})")
    else:
        matrices = run_classification_experiment(cfg, args.out)
        for matrix in matrices:
            print(f"snr={matrix.snr_db:5.1f} dB  accuracy={100 * matrix.accuracy():.2f}%")
    print(f"results written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
