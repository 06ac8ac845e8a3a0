"""
Tests for the SVG line-chart emitter.
"""
import xml.etree.ElementTree as ET

import pytest

from app.core.exceptions import MissingColumnError
from app.services.plot_service import emit_plot, smooth

SVG = "{http://www.w3.org/2000/svg}"


def _polylines(path):
    root = ET.parse(path).getroot()
    assert root.tag == f"{SVG}svg"
    return {p.get("data-column"): p.get("points").split() for p in root.iter(f"{SVG}polyline")}


def test_two_rows_give_two_points(tmp_path):
    csv_path = tmp_path / "m.csv"
    csv_path.write_text("step,eval_return_mean\n100,-5.0\n200,-3.0\n")
    out = emit_plot(csv_path, ["eval_return_mean"], tmp_path / "m.svg")
    lines = _polylines(out)
    assert list(lines) == ["eval_return_mean"]
    assert len(lines["eval_return_mean"]) == 2


def test_header_only_csv_gives_empty_chart(tmp_path):
    csv_path = tmp_path / "m.csv"
    csv_path.write_text("step,eval_return_mean\n")
    out = emit_plot(csv_path, ["eval_return_mean"], tmp_path / "m.svg")
    assert _polylines(out) == {}
    assert "eval_return_mean" in out.read_text()


def test_non_numeric_cells_are_skipped(tmp_path):
    csv_path = tmp_path / "m.csv"
    csv_path.write_text("step,eval_return_mean,alpha\n1,-1,0.7\n2,diverged,0.71\n")
    lines = _polylines(emit_plot(csv_path, ["eval_return_mean", "alpha"], tmp_path / "m.svg"))
    assert len(lines["eval_return_mean"]) == 1
    assert len(lines["alpha"]) == 2


def test_row_index_is_used_without_step_column(tmp_path):
    csv_path = tmp_path / "seeds.csv"
    csv_path.write_text("q2_sup_error\n0.1\n0.2\n0.05\n")
    lines = _polylines(emit_plot(csv_path, ["q2_sup_error"], tmp_path / "seeds.svg"))
    xs = [float(p.split(",")[0]) for p in lines["q2_sup_error"]]
    assert xs == sorted(xs) and len(xs) == 3


def test_missing_column_names_what_is_available(tmp_path):
    csv_path = tmp_path / "m.csv"
    csv_path.write_text("step,alpha\n1,0.7\n")
    with pytest.raises(MissingColumnError) as info:
        emit_plot(csv_path, ["alpha", "q1_mean"], tmp_path / "m.svg")
    assert info.value.context["missing"] == ["q1_mean"]
    assert info.value.context["available"] == ["step", "alpha"]
    assert not (tmp_path / "m.svg").exists()


def test_smoothing():
    assert smooth([1.0, 2.0, 3.0, 4.0], 1) == [1.0, 2.0, 3.0, 4.0]
    assert smooth([1.0, 2.0, 3.0, 4.0], 2) == pytest.approx([1.0, 1.5, 2.5, 3.5])
    assert smooth([], 3) == []


def test_invalid_smoothing_window(tmp_path):
    csv_path = tmp_path / "m.csv"
    csv_path.write_text("step,alpha\n1,0.7\n")
    with pytest.raises(ValueError):
        emit_plot(csv_path, ["alpha"], tmp_path / "m.svg", smooth_window=0)
