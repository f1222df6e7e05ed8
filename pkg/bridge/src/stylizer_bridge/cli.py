"""Bridge entry point.

    agar-style-bridge JOB.json [options]       process one job file
    agar-style-bridge serve DIR [options]      process a job directory

Options: --features {vgg19,builtin}, --iterations N, --lr X, --seed N,
--poll SECONDS (serve mode). Environment defaults: BRIDGE_FEATURES,
BRIDGE_ITERATIONS, BRIDGE_LR.

Exit codes: 0 success (serve mode marks per-job failures and still exits
0), 1 fatal (bad usage, missing pretrained features, diverged single job).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .features import FeatureUnavailable
from .jobs import run_job, serve_jobs
from .train import JobError, TrainSettings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agar-style-bridge")
    parser.add_argument("target", help="job JSON file, or 'serve'")
    parser.add_argument("job_dir", nargs="?", help="job directory (serve mode)")
    parser.add_argument(
        "--features",
        choices=["vgg19", "builtin"],
        default=os.environ.get("BRIDGE_FEATURES", "vgg19"),
    )
    parser.add_argument(
        "--iterations", type=int, default=int(os.environ.get("BRIDGE_ITERATIONS", "300"))
    )
    parser.add_argument("--lr", type=float, default=float(os.environ.get("BRIDGE_LR", "0.5")))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--poll", type=float, default=0.0, help="serve rescan interval")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    args = build_parser().parse_args(argv)
    settings = TrainSettings(
        features=args.features, iterations=args.iterations, lr=args.lr, seed=args.seed
    )
    try:
        if args.target == "serve":
            if not args.job_dir:
                print("serve mode needs a job directory", file=sys.stderr)
                return 1
            serve_jobs(args.job_dir, settings, poll=args.poll)
            return 0
        if args.job_dir:
            print("unexpected extra argument in single-job mode", file=sys.stderr)
            return 1
        run_job(args.target, settings)
        return 0
    except (JobError, FeatureUnavailable, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
