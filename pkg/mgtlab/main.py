import argparse
import logging
import sys
from pathlib import Path

from mgtlab import __version__
from mgtlab.commands import check, run, stability_map, sweep
from mgtlab.config import configure_logging, get_settings
from mgtlab.errors import MgtLabError

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(prog="mgtlab", description=settings.app_name)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--out", default=None, help=f"output directory (default {settings.out_dir})")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register commands
    run.register(subparsers)
    sweep.register(subparsers)
    stability_map.register(subparsers)
    check.register(subparsers)
    return parser


def main(argv=None) -> int:
    settings = get_settings()
    args = build_parser().parse_args(argv)
    configure_logging("DEBUG" if args.verbose or settings.debug else settings.log_level)
    out_dir = Path(args.out or settings.out_dir)

    try:
        return args.handler(args, out_dir)
    except MgtLabError as e:
        logger.debug("command failed", exc_info=True)
        print(f"❌ {e} (exit {e.exit_code})", file=sys.stderr)
        return e.exit_code
