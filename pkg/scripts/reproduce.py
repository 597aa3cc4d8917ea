"""Run every study under configs/ through the CLI and redraw their figures.

Usage: python scripts/reproduce.py [--quick] [--out DIR]

``--quick`` trims each study to its first two seeds, which is enough to
exercise artifact emission in a few minutes. Exit status is the worst CLI
exit code seen.
"""

import argparse
import os
import sys

from selfpred.harness.cli import main as cli
from selfpred.harness.config import load_config

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
STUDIES = [
    ("oracle", "oracle.ini"),
    ("oracle", "bound.ini"),
    ("collapse", "collapse.ini"),
    ("train", "train-keydoor.ini"),
    ("train", "train-distractors.ini"),
    ("rank", "rank.ini"),
]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--quick", action="store_true", help="first two seeds only")
    parser.add_argument("--out", help="write artifacts under this directory")
    args = parser.parse_args(argv)
    worst = 0
    for command, name in STUDIES:
        path = os.path.join(ROOT, "configs", name)
        argv = [command, "--config", path]
        if args.quick:
            seeds = load_config(path).seeds[:2]
            argv += ["--seeds", ",".join(map(str, seeds))]
        if args.out:
            argv += ["--out", os.path.join(args.out, os.path.splitext(name)[0])]
        print(f"== {command} {name}", flush=True)
        worst = max(worst, cli(argv))
    return worst


if __name__ == "__main__":
    sys.exit(main())
