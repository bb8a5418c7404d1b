# kdda/cli/main.py
import argparse
import sys
from typing import Optional, Sequence

from aws_lambda_powertools import Logger

from kdda.cli import commands
from kdda.cli.errors import InvalidConfigError
from kdda.data import DatasetError
from kdda.settings import settings
from kdda.tensor_ad.gradcheck import DEFAULT_INSTANCES, DEFAULT_TOLERANCE
from kdda.trainers import TrainingConfigError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INVALID = 2

# Raised for bad input before or while building a run.
VALIDATION_ERRORS = (InvalidConfigError, TrainingConfigError, DatasetError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdda",
        description="Joint knowledge distillation and unsupervised domain adaptation experiments.",
    )
    parser.add_argument("--log-level", default=None, help="overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--override", action="append", default=[], metavar="K=V",
                       help="config override, repeatable (epochs=0, targets.0.rotation_deg=45)")
        p.add_argument("--seed", type=int, default=None, help="run seed (sets train.seed)")

    train = sub.add_parser("train", help="train one configured procedure")
    add_run_flags(train)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference check of every op and loss")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--instances", type=int, default=DEFAULT_INSTANCES)
    gradcheck.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)

    sweep = sub.add_parser("sweep", help="run a cross-product of config values and aggregate")
    add_run_flags(sweep)
    sweep.add_argument("--axis", action="append", default=[], metavar="K=V1,V2",
                       help="swept key and its values, repeatable")

    evaluate = sub.add_parser("eval", help="score the checkpoints of a finished run")
    evaluate.add_argument("--out", required=True, help="run directory written by train")
    evaluate.add_argument("--config", default=None, help="defaults to the run's resolved config")
    return parser


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "train":
        return commands.cmd_train(args.config, args.override, args.out, args.seed)
    if args.command == "gradcheck":
        if args.instances < 1:
            raise InvalidConfigError(f"--instances must be positive, got {args.instances}")
        return commands.cmd_gradcheck(args.seed, args.instances, args.tolerance)
    if args.command == "sweep":
        return commands.cmd_sweep(args.config, args.axis, args.out, args.override, args.seed)
    return commands.cmd_eval(args.out, args.config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Command-line entrypoint. Validation errors exit 2, anything unexpected
    exits 1; both print a one-line message to stderr.
    """
    args = build_parser().parse_args(argv)
    logger = Logger(service="kdda", level=(args.log_level or settings.log_level).upper())
    try:
        return dispatch(args)
    except VALIDATION_ERRORS as e:
        logger.warning("Invalid configuration", extra={"command": args.command, "error": str(e)})
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:
        logger.exception("Command failed", extra={"command": args.command})
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
