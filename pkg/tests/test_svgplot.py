import xml.etree.ElementTree as ET

import numpy as np
import pytest

from movelab.errors import PlotError
from movelab.svgplot import emit_plot, minmax_decimate

SVG_NS = "{http://www.w3.org/2000/svg}"


def parse_svg(data: bytes):
    return ET.fromstring(data.decode("utf-8"))


class TestEmitPlot:
    def test_single_series_one_polyline_all_points(self):
        t = np.arange(10) / 10.0
        v = np.sin(t)
        root = parse_svg(emit_plot([(t, v)], ["sig"]))
        polylines = root.findall(f".//{SVG_NS}polyline")
        assert len(polylines) == 1
        assert len(polylines[0].attrib["points"].split()) == 10

    def test_empty_input_raises(self):
        with pytest.raises(PlotError):
            emit_plot([], [])
        with pytest.raises(PlotError):
            emit_plot([(np.array([]), np.array([]))], ["x"])

    def test_two_series_two_polylines_with_legend(self):
        t = np.arange(20) / 10.0
        data = emit_plot([(t, np.sin(t)), (t, np.cos(t))], ["first", "second"])
        root = parse_svg(data)
        assert len(root.findall(f".//{SVG_NS}polyline")) == 2
        texts = [el.text for el in root.findall(f".//{SVG_NS}text")]
        assert "first" in texts and "second" in texts

    def test_axis_labels_present(self):
        t = np.arange(5, dtype=float)
        root = parse_svg(
            emit_plot([(t, t)], ["x"], x_label="time (s)", y_label="force (N)")
        )
        texts = [el.text for el in root.findall(f".//{SVG_NS}text")]
        assert "time (s)" in texts
        assert "force (N)" in texts

    def test_deterministic_bytes(self):
        rng = np.random.default_rng(0)
        t = np.arange(1000) / 100.0
        v = rng.normal(size=1000)
        assert emit_plot([(t, v)], ["a"]) == emit_plot([(t, v)], ["a"])

    def test_label_count_mismatch(self):
        t = np.arange(5, dtype=float)
        with pytest.raises(PlotError):
            emit_plot([(t, t)], ["a", "b"])

    def test_markers_rendered(self):
        t = np.arange(100) / 100.0
        v = np.sin(t)
        root = parse_svg(
            emit_plot([(t, v)], ["sig"], markers=[(0.5, float(np.sin(0.5)), "peak")])
        )
        texts = [el.text for el in root.findall(f".//{SVG_NS}text")]
        assert "peak" in texts
        assert len(root.findall(f".//{SVG_NS}circle")) == 1


class TestMinmaxDecimate:
    def test_short_series_verbatim(self):
        idx = minmax_decimate(np.arange(10.0), np.arange(10.0), 100)
        assert np.array_equal(idx, np.arange(10))

    def test_extrema_survive(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=100_000)
        y[12345] = 50.0
        y[67890] = -50.0
        idx = minmax_decimate(np.arange(len(y), dtype=float), y, 500)
        assert 12345 in idx
        assert 67890 in idx
        assert len(idx) <= 2 * 500

    def test_indices_sorted_unique(self):
        rng = np.random.default_rng(2)
        y = rng.normal(size=10_000)
        idx = minmax_decimate(np.arange(len(y), dtype=float), y, 300)
        assert np.array_equal(idx, np.unique(idx))

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=5000)
        x = np.arange(len(y), dtype=float)
        buckets = 100
        idx = set(minmax_decimate(x, y, buckets).tolist())
        edges = np.linspace(0, len(y), buckets + 1).astype(int)
        for b in range(buckets):
            lo, hi = edges[b], edges[b + 1]
            seg = y[lo:hi]
            assert lo + int(np.argmax(seg)) in idx
            assert lo + int(np.argmin(seg)) in idx
