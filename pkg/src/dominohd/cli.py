"""Command-line entry point: ``dominohd <command> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .container import ContainerError
from .data import DataError
from .experiments import COMMANDS, ConfigError, RunRecord, build_config, load_config_file
from .generalization import InvariantViolation

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 0, 2, 3, 4

# flag -> config field; every flag defaults to "not given" so the config file can fill it
_FLAGS = [
    ("--dataset", str, "synthetic, dsads, uschad, pamap2, or a .domd file"),
    ("--root", str, "dataset directory"),
    ("--dim", int, "physical dimensionality D"),
    ("--effective-dim", int, "effective dimensionality D*"),
    ("--regen-rate", float, "regeneration rate R in (0, 1)"),
    ("--eta", float, "learning rate"),
    ("--epochs", int, "passes per training round"),
    ("--seed", int, "global seed"),
    ("--split", str, "lodo, partial, imbalanced or kfold"),
    ("--holdout", int, "held-out domain, numbered from 1"),
    ("--fraction", float, "training fraction for the partial split"),
    ("--major-domain", int, "dominant domain for the imbalanced split, numbered from 1"),
    ("--baseline", str, "paired baseline width: physical, effective or none"),
    ("--bitwidth", str, "comma-separated bitwidths, e.g. 1,8"),
    ("--flip-rates", str, "comma-separated flip rates, e.g. 0,0.05"),
    ("--trials", int, "fault-injection seeds per cell"),
    ("--model", str, "model container to load"),
    ("--dims", str, "sweep grid over D"),
    ("--effective-dims", str, "sweep grid over D*"),
    ("--regen-rates", str, "sweep grid over R"),
    ("--sweep-protocol", str, "split or lodo"),
    ("--backend", str, "ngram or rbf"),
    ("--synth-classes", int, "synthetic: classes"),
    ("--synth-domains", int, "synthetic: domains"),
    ("--synth-sensors", int, "synthetic: channels"),
    ("--synth-window", int, "synthetic: window length"),
    ("--synth-per-domain", int, "synthetic: windows per domain"),
    ("--synth-shift", float, "synthetic: strength of the domain-specific component"),
    ("--synth-noise", float, "synthetic: noise standard deviation"),
    ("--synth-planted", float, "synthetic: share of channels carrying domain shift"),
    ("--workers", int, "parallel jobs"),
    ("--out", str, "output directory; nothing is written outside it"),
]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file")
    for flag, typ, help_text in _FLAGS:
        common.add_argument(flag, type=typ, default=argparse.SUPPRESS, help=help_text)
    parser = argparse.ArgumentParser(prog="dominohd", description="Domain-generalizing HDC experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0])
    return parser


def _summary(result):
    if isinstance(result, RunRecord):
        return {"command": result.command, "baseline": result.baseline,
                "accuracy": result.report["overall_accuracy"], "timings": result.timings}
    return result


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    command = args.pop("command")
    config_file = args.pop("config", None)
    try:
        cfg = build_config(load_config_file(config_file) if config_file else {}, args)
        result = COMMANDS[command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ContainerError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as e:
        # remaining library validation errors stem from settings
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(_summary(result), sort_keys=True, default=str, indent=1))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
