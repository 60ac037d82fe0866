"""Entry point – build the parser, register commands, run one."""

import argparse
import logging
import sys

from sptcl import __version__
from sptcl import config as settings
from sptcl.commands import noise, predict, sweep, synth, train
from sptcl.errors import SptclError

logger = logging.getLogger(__name__)

COMMANDS = (train, predict, synth, noise, sweep)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sptcl",
        description="Self-paced transfer classifier learning for noisy, partial domain adaptation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every inner iteration")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Parse arguments and run a command; returns the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=logging.DEBUG if args.verbose else settings.LOG_LEVEL,
    )
    try:
        return args.handler(args)
    except SptclError as exc:
        message = " ".join(str(exc).split())
        print(f"error: {exc.category}: {message}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception("Unexpected failure in %s", args.command)
        print(f"error: InternalError: {type(exc).__name__}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
