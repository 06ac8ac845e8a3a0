"""
Renders metric CSV columns as a standalone SVG line chart.
메트릭 CSV 컬럼을 외부 렌더러 없이 텍스트 SVG 선 그래프로 그립니다.
"""
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import MissingColumnError
from app.core.logging import get_logger
from app.repositories.metrics_repository import load_table, parse_number

logger = get_logger(__name__)

WIDTH, HEIGHT = 720, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 70, 160, 30, 50
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
X_COLUMN = "step"

Series = List[Tuple[float, float]]


def smooth(values: Sequence[float], window: int) -> List[float]:
    """후행 이동 평균. window=1 이면 원본 그대로."""
    if window <= 1:
        return list(values)
    cumulative = np.cumsum(np.concatenate([[0.0], np.asarray(values, dtype=np.float64)]))
    out = []
    for i in range(len(values)):
        lo = max(0, i + 1 - window)
        out.append(float((cumulative[i + 1] - cumulative[lo]) / (i + 1 - lo)))
    return out


def _collect(rows: List[Dict[str, str]], columns: Sequence[str], smooth_window: int) -> Dict[str, Series]:
    series: Dict[str, Series] = {}
    for column in columns:
        points = []
        for index, row in enumerate(rows):
            x = parse_number(row.get(X_COLUMN)) if X_COLUMN in row else float(index)
            y = parse_number(row.get(column))
            # 'diverged' 같은 비숫자 셀은 건너뜁니다
            if x is None or y is None:
                continue
            points.append((x, y))
        ys = smooth([p[1] for p in points], smooth_window)
        series[column] = [(x, y) for (x, _), y in zip(points, ys)]
    return series


def _span(values: List[float]) -> Tuple[float, float]:
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _label(value: float) -> str:
    return format(value, ".4g")


def render_svg(series: Dict[str, Series], x_label: str = X_COLUMN, y_label: str = "value") -> ET.Element:
    """컬럼별 polyline, 축, 축 라벨, 범례를 담은 <svg> 요소."""
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    x_lo, x_hi = _span([x for pts in series.values() for x, _ in pts])
    y_lo, y_hi = _span([y for pts in series.values() for _, y in pts])

    def sx(x: float) -> float:
        return MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y: float) -> float:
        return MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    svg = ET.Element(
        "svg",
        {
            "xmlns": "http://www.w3.org/2000/svg",
            "width": str(WIDTH),
            "height": str(HEIGHT),
            "viewBox": f"0 0 {WIDTH} {HEIGHT}",
            "font-family": "sans-serif",
            "font-size": "12",
        },
    )
    ET.SubElement(svg, "rect", {"width": str(WIDTH), "height": str(HEIGHT), "fill": "white"})

    axes = ET.SubElement(svg, "g", {"id": "axes", "stroke": "black", "stroke-width": "1"})
    x0, y0 = MARGIN_LEFT, MARGIN_TOP + plot_h
    ET.SubElement(axes, "line", {"x1": str(x0), "y1": str(y0), "x2": str(x0 + plot_w), "y2": str(y0)})
    ET.SubElement(axes, "line", {"x1": str(x0), "y1": str(MARGIN_TOP), "x2": str(x0), "y2": str(y0)})

    labels = ET.SubElement(svg, "g", {"id": "labels", "fill": "black"})
    for text, x, y, anchor in (
        (_label(x_lo), x0, y0 + 16, "start"),
        (_label(x_hi), x0 + plot_w, y0 + 16, "end"),
        (_label(y_lo), x0 - 6, y0, "end"),
        (_label(y_hi), x0 - 6, MARGIN_TOP + 10, "end"),
    ):
        ET.SubElement(labels, "text", {"x": f"{x:.2f}", "y": f"{y:.2f}", "text-anchor": anchor}).text = text
    ET.SubElement(
        labels, "text", {"x": f"{x0 + plot_w / 2:.2f}", "y": str(HEIGHT - 12), "text-anchor": "middle"}
    ).text = x_label
    ET.SubElement(
        labels,
        "text",
        {
            "x": "16",
            "y": f"{MARGIN_TOP + plot_h / 2:.2f}",
            "text-anchor": "middle",
            "transform": f"rotate(-90 16 {MARGIN_TOP + plot_h / 2:.2f})",
        },
    ).text = y_label

    lines = ET.SubElement(svg, "g", {"id": "series", "fill": "none", "stroke-width": "1.5"})
    legend = ET.SubElement(svg, "g", {"id": "legend"})
    for i, (column, points) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        if points:
            ET.SubElement(
                lines,
                "polyline",
                {
                    "data-column": column,
                    "stroke": color,
                    "points": " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in points),
                },
            )
        ly = MARGIN_TOP + 10 + i * 18
        lx = WIDTH - MARGIN_RIGHT + 14
        ET.SubElement(
            legend, "line", {"x1": str(lx), "y1": str(ly), "x2": str(lx + 20), "y2": str(ly), "stroke": color, "stroke-width": "2"}
        )
        ET.SubElement(legend, "text", {"x": str(lx + 26), "y": str(ly + 4)}).text = column
    return svg


def emit_plot(
    csv_path: Union[str, Path],
    columns: Sequence[str],
    out_path: Union[str, Path],
    smooth_window: int = 1,
) -> Path:
    """
    CSV 의 지정 컬럼을 SVG 선 그래프로 씁니다.

    Args:
        csv_path: 입력 CSV (x 축은 'step' 컬럼, 없으면 행 번호)
        columns: 그릴 컬럼 이름 목록
        out_path: 출력 SVG 경로
        smooth_window: 후행 이동 평균 창 크기

    Returns:
        Path: 작성된 SVG 경로

    Raises:
        MissingColumnError: 요청한 컬럼이 CSV 에 없을 때
    """
    if smooth_window < 1:
        raise ValueError("smooth_window must be >= 1")
    header, rows = load_table(csv_path)
    missing = [c for c in columns if c not in header]
    if missing:
        raise MissingColumnError(missing, header)

    series = _collect(rows, columns, smooth_window)
    svg = render_svg(series)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    ET.ElementTree(svg).write(out, encoding="utf-8", xml_declaration=True)
    logger.info(f"Plot written: {out} ({', '.join(f'{c}={len(p)} pts' for c, p in series.items())})")
    return out
