"""Command line entry point.

Exit codes: 0 when every registered claim holds, 1 when any claim fails,
2 for usage or configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config, parse_seeds
from .registry import (SUBCOMMAND_KINDS, default_config, figures_from_artifacts, run_study,
                       write_artifacts, write_figures)

EXIT_OK, EXIT_CLAIM_FAILED, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfpred", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config file (INI)")
    common.add_argument("--seeds", help="seed list such as 0-8 or 1,3,5 (overrides the config)")
    common.add_argument("--out", help="artifact directory (overrides the config)")
    helps = {
        "oracle": "exact tabular suites (oracle-suite or bound-check configs)",
        "collapse": "linear self-prediction collapse study",
        "train": "agent training study",
        "rank": "latent rank report under online and EMA targets",
        "plot": "redraw SVG figures from existing CSV artifacts",
        "validate-config": "parse a config and print its content hash",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def _resolve(args):
    if args.config:
        cfg = load_config(args.config)
    elif args.command in SUBCOMMAND_KINDS:
        cfg = default_config(args.command)
    else:
        raise ConfigError(f"{args.command} needs --config")
    if args.command in SUBCOMMAND_KINDS and cfg.kind not in SUBCOMMAND_KINDS[args.command]:
        raise ConfigError(f"{args.command} cannot run a {cfg.kind!r} config")
    if args.seeds:
        cfg = cfg.with_seeds(parse_seeds(args.seeds))
    if args.out:
        cfg = cfg.with_out(args.out)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _resolve(args)
    except (ConfigError, OSError) as err:
        parser.print_usage(sys.stderr)
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "validate-config":
        print(cfg.content_hash())
        return EXIT_OK
    if args.command == "plot":
        plots = figures_from_artifacts(cfg)
        if not plots:
            print(f"error: no plottable artifacts for config {cfg.content_hash()} in {cfg.out}",
                  file=sys.stderr)
            return EXIT_USAGE
        for path in write_figures(cfg, plots):
            print(path)
        return EXIT_OK
    result = run_study(cfg)
    write_artifacts(cfg, result)
    for claim in result.claims:
        print(claim.line())
    print(f"artifacts: {cfg.out} (config {cfg.content_hash()})")
    return EXIT_OK if result.passed else EXIT_CLAIM_FAILED


if __name__ == "__main__":
    sys.exit(main())
