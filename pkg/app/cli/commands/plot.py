"""
Plot command.
메트릭 CSV 를 SVG 로 그리는 명령.
"""
import argparse
from pathlib import Path
from typing import List

from app.core.exceptions import MissingColumnError
from app.core.logging import get_logger
from app.core.result import EXIT_CONFIG_ERROR, EXIT_OK
from app.services.plot_service import emit_plot

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("plot", allow_abbrev=False, help="Render CSV columns as an SVG line chart")
    parser.add_argument("--csv", required=True)
    parser.add_argument("--columns", required=True, help="Comma-separated column names")
    parser.add_argument("--out", default=None, help="Output SVG (default: CSV path with .svg suffix)")
    parser.add_argument("--smooth", type=int, default=1, help="Trailing moving-average window")
    parser.set_defaults(command=handle, accepts_overrides=False)


def handle(args: argparse.Namespace, overrides: List[str]) -> int:
    columns = [c.strip() for c in args.columns.split(",") if c.strip()]
    out = args.out or str(Path(args.csv).with_suffix(".svg"))
    try:
        path = emit_plot(args.csv, columns, out, smooth_window=args.smooth)
    except MissingColumnError as e:
        logger.error(f"✗ {e}")
        return EXIT_CONFIG_ERROR
    except (FileNotFoundError, ValueError) as e:
        logger.error(f"✗ Plot failed: {e}")
        return EXIT_CONFIG_ERROR
    print(path)
    return EXIT_OK
