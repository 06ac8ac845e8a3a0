"""
Train command.
단일 학습 실행 명령.
"""
import argparse
from typing import List

from app.cli.dependencies import get_run_service
from app.core.exceptions import ConfigParseError
from app.core.logging import get_logger
from app.core.result import EXIT_CONFIG_ERROR, EXIT_OK, Err, Ok
from app.services.config_loader import parse_config

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", allow_abbrev=False, help="Train one GRAC agent (extra --key=value pairs override the config)")
    parser.add_argument("--config", help="Flat key=value config file")
    parser.set_defaults(command=handle, accepts_overrides=True)


def handle(args: argparse.Namespace, overrides: List[str]) -> int:
    """
    설정을 읽고 학습을 실행합니다.

    Returns:
        int: 0 성공, 1 설정 오류, 2 발산
    """
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigParseError as e:
        logger.error(f"✗ {e}")
        return EXIT_CONFIG_ERROR

    result = get_run_service().train(cfg)
    match result:
        case Ok(summary):
            logger.info(f"✓ Training finished: {summary.run_dir}")
            print(summary.model_dump_json())
            return EXIT_OK
        case Err():
            logger.error(f"✗ Training failed: {result.error_message}")
            return result.exit_code
    return EXIT_CONFIG_ERROR
