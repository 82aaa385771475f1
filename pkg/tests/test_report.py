import math
import xml.etree.ElementTree as ET

import numpy as np

from difno import report


def svg_ok(text):
    # well-formed XML with an svg root is the contract
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")
    return root


class TestCurves:
    def test_empty_series_is_axes_only(self):
        text = report.render_curves({}, "nothing yet")
        svg_ok(text)
        assert "polyline" not in text
        assert "nothing yet" in text

    def test_nonempty_series_draws_polylines(self):
        s = {"loss": [(0, 1.0), (1, 0.5), (2, 0.25)],
             "val": [(0, 2.0), (1, 1.0)]}
        text = report.render_curves(s, "t")
        svg_ok(text)
        assert text.count("<polyline") == 2
        assert "loss" in text and "val" in text

    def test_deterministic_bytes(self):
        s = {"a": [(i, math.sin(i) + 2.0) for i in range(20)]}
        assert report.render_curves(s, "x") == report.render_curves(s, "x")

    def test_nonfinite_points_are_dropped(self):
        s = {"a": [(0, 1.0), (1, float("nan")), (2, float("inf")), (3, 2.0)]}
        text = report.render_curves(s, "t")
        svg_ok(text)
        assert text.count("<polyline") == 1

    def test_all_nonfinite_degrades_to_axes(self):
        s = {"a": [(0, float("nan"))]}
        svg_ok(report.render_curves(s, "t"))

    def test_mixed_sign_values_use_linear_scale(self):
        s = {"a": [(0, -1.0), (1, 1.0)]}
        svg_ok(report.render_curves(s, "t"))

    def test_escapes_markup_in_title(self):
        text = report.render_curves({}, "a < b & c")
        svg_ok(text)
        assert "a < b & c" not in text  # raw markup must not survive


class TestHeatmap:
    def test_renders_and_parses(self):
        vals = np.arange(12.0).reshape(3, 4)
        text = report.render_heatmap(vals, "field")
        svg_ok(text)
        assert text.count("<rect") >= 12

    def test_deterministic(self):
        vals = np.linspace(-1, 1, 16).reshape(4, 4)
        assert report.render_heatmap(vals, "f") == report.render_heatmap(vals, "f")

    def test_constant_field(self):
        svg_ok(report.render_heatmap(np.zeros((2, 2)), "flat"))


class TestCsv:
    def test_series_csv_layout(self):
        s = {"a": [(0, 0.5)], "b": [(1, 0.25), (2, 0.125)]}
        text = report.series_csv(s)
        lines = text.strip().split("\n")
        assert lines[0] == "series,x,y"
        assert len(lines) == 4
        assert lines[1].startswith("a,")

    def test_read_csv_round_trip(self):
        text = "x,y\n1,2\n3,4\n"
        header, rows = report.read_csv(text)
        assert header == ["x", "y"]
        assert rows == [["1", "2"], ["3", "4"]]

    def test_history_series_extracts_columns(self):
        text = ("epoch,output_loss,derivative_loss,"
                "val_output_loss,val_derivative_loss,lr\n"
                "0,1.0,2.0,1.5,2.5,0.001\n"
                "1,0.5,1.0,0.75,1.25,0.001\n")
        series = report.history_series(text)
        assert series["output_loss"] == [(0.0, 1.0), (1.0, 0.5)]
        assert series["lr"][1] == (1.0, 0.001)

    def test_history_series_skips_junk_rows(self):
        text = "epoch,output_loss\n0,1.0\nmean,oops\n1,0.5\n"
        series = report.history_series(text)
        assert len(series["output_loss"]) == 2
