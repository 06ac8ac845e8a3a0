"""
GRAC Trainer - Command-line entry point
GRAC 학습 / 평가 / ablation / 테이블 검증 / 플롯 CLI 엔트리포인트
"""
import argparse
import sys
from typing import List, Optional

from app.cli.commands import ablate, evaluate, plot, train, verify
from app.core.config import settings
from app.core.logging import get_logger
from app.core.result import EXIT_CONFIG_ERROR

logger = get_logger(__name__)


class CliParser(argparse.ArgumentParser):
    """argparse 기본 종료 코드 2 는 발산 코드와 겹치므로 1 로 바꿉니다."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> CliParser:
    parser = CliParser(prog="grac", allow_abbrev=False, description=f"{settings.PROJECT_TITLE} {settings.PROJECT_VERSION}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for module in (train, evaluate, ablate, verify, plot):
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)
    if extras and not args.accepts_overrides:
        parser.error(f"unrecognized arguments: {' '.join(extras)}")

    logger.info("=" * 70)
    logger.info(f"Starting {settings.PROJECT_TITLE} {settings.PROJECT_VERSION}: {args.subcommand}")
    logger.info("=" * 70)
    try:
        code = args.command(args, extras)
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return 130
    except Exception as e:
        logger.critical(f"Unhandled exception in '{args.subcommand}': {e}", exc_info=True)
        return EXIT_CONFIG_ERROR

    logger.info("=" * 70)
    logger.info(f"{'✓' if code == 0 else '✗'} {args.subcommand} finished with exit code {code}")
    logger.info("=" * 70)
    return code


if __name__ == "__main__":
    sys.exit(main())
