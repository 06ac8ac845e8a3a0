"""
Evaluate command.
저장된 run 디렉토리의 정책을 평가하는 명령.
"""
import argparse
from typing import List

from app.cli.dependencies import get_run_service
from app.core.logging import get_logger
from app.core.result import EXIT_CONFIG_ERROR, EXIT_OK, Err, Ok

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", allow_abbrev=False, help="Evaluate the final checkpoint of a run directory")
    parser.add_argument("--run-dir", required=True, help="Run directory containing config.txt and checkpoints/")
    parser.add_argument("--episodes", type=int, default=10)
    parser.add_argument("--seed", type=int, default=None, help="Evaluation seed (default: training seed + offset)")
    parser.add_argument("--checkpoint", default=None, help="Checkpoint file (default: checkpoints/final.ckpt)")
    parser.set_defaults(command=handle, accepts_overrides=False)


def handle(args: argparse.Namespace, overrides: List[str]) -> int:
    if args.episodes < 1:
        logger.error("✗ --episodes must be >= 1")
        return EXIT_CONFIG_ERROR

    result = get_run_service().evaluate(args.run_dir, args.episodes, seed=args.seed, checkpoint=args.checkpoint)
    match result:
        case Ok(summary):
            print(summary.model_dump_json())
            return EXIT_OK
        case Err():
            logger.error(f"✗ Evaluation failed: {result.error_message}")
            return result.exit_code
    return EXIT_CONFIG_ERROR
