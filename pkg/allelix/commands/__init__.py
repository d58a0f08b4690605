"""Command line entry point.

Exit status: 0 success, 2 usage error, otherwise the ``exit_code`` of the
raised AllelixError (see documentation/exit_codes.md).
"""
import argparse
import logging
import sys

from config import Config
from allelix import __version__, configure_logging
from allelix.commands import analysis, export, project
from allelix.errors import AllelixError

logger = logging.getLogger(__name__)


def build_parser():
    parser = argparse.ArgumentParser(
        prog='allelix',
        description='Allelic imbalance detection with NB, BetaNB and MCNB mixture models',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--log-level', default=Config.LOG_LEVEL, help='DEBUG, INFO, WARNING or ERROR')
    parser.add_argument('--threads', type=int, help='Worker threads (default ALLELIX_THREADS)')
    subparsers = parser.add_subparsers(dest='verb', metavar='<verb>')
    project.register(subparsers)
    analysis.register(subparsers)
    export.register(subparsers)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if args.verb is None:
        parser.print_usage(sys.stderr)
        return 2
    configure_logging(args.log_level)
    config = type('Effective', (Config,), {})
    if args.threads is not None:
        config.THREADS = max(1, args.threads)
    try:
        return args.handler(args, config) or 0
    except AllelixError as exc:
        print(f"error\t{type(exc).__name__}\t{exc}", file=sys.stderr)
        return exc.exit_code
    except Exception:
        logger.exception(f"Unexpected failure in {args.verb}")
        return 1
