"""
Ablate command.
ablation 변형 전체를 여러 시드로 실행하는 명령.
"""
import argparse
from typing import List

from app.cli.dependencies import get_ablation_service
from app.core.exceptions import ConfigParseError
from app.core.logging import get_logger
from app.core.result import EXIT_CONFIG_ERROR, EXIT_OK, Err, Ok
from app.services.config_loader import parse_config

logger = get_logger(__name__)


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def register(subparsers) -> None:
    parser = subparsers.add_parser("ablate", allow_abbrev=False, help="Run the ablation variant matrix")
    parser.add_argument("--config", help="Base config file; output_dir becomes the ablation root")
    parser.add_argument("--seeds", type=_int_list, default=[0, 1, 2, 3])
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--include-min-q", action="store_true", help="Add the min-Q actor variant")
    parser.add_argument("--variants", default=None, help="Comma-separated subset of variants")
    parser.set_defaults(command=handle, accepts_overrides=True)


def handle(args: argparse.Namespace, overrides: List[str]) -> int:
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigParseError as e:
        logger.error(f"✗ {e}")
        return EXIT_CONFIG_ERROR
    if not args.seeds:
        logger.error("✗ --seeds must name at least one seed")
        return EXIT_CONFIG_ERROR

    variants = [v.strip() for v in args.variants.split(",")] if args.variants else None
    try:
        result = get_ablation_service().run(
            cfg,
            seeds=args.seeds,
            workers=max(1, args.workers),
            include_min_q_variant=args.include_min_q,
            variants=variants,
        )
    except ValueError as e:
        logger.error(f"✗ {e}")
        return EXIT_CONFIG_ERROR

    match result:
        case Ok(summary):
            for v in summary.variants.values():
                logger.info(
                    f"{v.variant:<22s} final={v.final_return_mean} normalized={v.normalized} "
                    f"|q1|max={v.q1_abs_max} |gap|={v.q_gap_abs_mean}"
                )
            print(summary.model_dump_json())
            return EXIT_OK
        case Err():
            logger.error(f"✗ Ablation failed: {result.error_message}")
            return result.exit_code
    return EXIT_CONFIG_ERROR
