"""Run every shipped simulation config through the CLI.

Usage: python3 scripts/run_configs.py [--n-sims N] [--parallelism P] [names ...]
"""

import argparse
import sys
from pathlib import Path

from predprob.cli import main as cli_main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config names without .json (default: all)")
    ap.add_argument("--n-sims", type=int)
    ap.add_argument("--parallelism", type=int)
    ap.add_argument("--full-precision", action="store_true")
    args = ap.parse_args(argv)
    names = args.names or sorted(p.stem for p in CONFIGS.glob("*.json"))
    status = 0
    for name in names:
        cmd = ["simulate", str(CONFIGS / f"{name}.json")]
        if args.n_sims:
            cmd += ["--n-sims", str(args.n_sims)]
        if args.parallelism:
            cmd += ["--parallelism", str(args.parallelism)]
        if args.full_precision:
            cmd.append("--full-precision")
        print(f"[{name}]", flush=True)
        status = max(status, cli_main(cmd))
    return status


if __name__ == "__main__":
    sys.exit(main())
