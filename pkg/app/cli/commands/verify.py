"""
Tabular verification command.
테이블형 수렴/정책 개선 검증 명령.
"""
import argparse
from typing import List

from app.cli.dependencies import get_verification_aggregator
from app.core.logging import get_logger
from app.core.result import EXIT_CONFIG_ERROR, EXIT_OK, Err, Ok
from app.services.verification_aggregator import format_report
from app.services.verification_checks import SuiteSettings

logger = get_logger(__name__)


def register(subparsers) -> None:
    defaults = SuiteSettings()
    parser = subparsers.add_parser("verify-tabular", allow_abbrev=False, help="Check max-min convergence and policy improvement on random MDPs")
    parser.add_argument("--output", default=None, help="Directory for tabular_seeds.csv and report.txt")
    parser.add_argument("--seeds", type=int, default=defaults.n_seeds)
    parser.add_argument("--samples", type=int, default=defaults.samples)
    parser.add_argument("--policy-pairs", type=int, default=defaults.policy_pairs)
    parser.add_argument("--base-seed", type=int, default=defaults.base_seed)
    parser.set_defaults(command=handle, accepts_overrides=False)


def handle(args: argparse.Namespace, overrides: List[str]) -> int:
    """
    Returns:
        int: 모든 검증이 PASS 면 0, 하나라도 FAIL 이면 1
    """
    if min(args.seeds, args.samples, args.policy_pairs) < 0:
        logger.error("✗ --seeds, --samples and --policy-pairs must be non-negative")
        return EXIT_CONFIG_ERROR
    suite = SuiteSettings(
        n_seeds=args.seeds,
        samples=args.samples,
        policy_pairs=args.policy_pairs,
        base_seed=args.base_seed,
    )
    result = get_verification_aggregator(suite, args.output).run()
    match result:
        case Ok(report):
            print(format_report(report), end="")
            return EXIT_OK if report.passed else EXIT_CONFIG_ERROR
        case Err():
            logger.error(f"✗ Verification could not be recorded: {result.error_message}")
            return result.exit_code
    return EXIT_CONFIG_ERROR
