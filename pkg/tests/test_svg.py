import xml.etree.ElementTree as ET

import numpy as np

from varlab import svg

NS = "{http://www.w3.org/2000/svg}"


def rects(doc):
    return ET.fromstring(doc).findall(f"{NS}rect")


class TestHeatmap:
    def test_well_formed_and_sized(self):
        v = np.arange(12.0).reshape(3, 4)
        cells = rects(svg.heatmap(v, "t<&>"))
        assert len(cells) == 12

    def test_extremes_at_matching_positions(self):
        v = np.zeros((4, 4))
        v[0, 0], v[3, 3] = -1.0, 1.0
        cells = rects(svg.heatmap(v))
        cold = [c for c in cells if c.get("fill") == "#0000ff"]
        hot = [c for c in cells if c.get("fill") == "#ff0000"]
        assert len(cold) == 1 and len(hot) == 1
        # (0, 0) is bottom-left, (3, 3) top-right
        assert float(cold[0].get("x")) < float(hot[0].get("x"))
        assert float(cold[0].get("y")) > float(hot[0].get("y"))

    def test_constant_field(self):
        assert len(rects(svg.heatmap(np.ones((2, 2))))) == 4

    def test_grid(self):
        panels = [np.random.default_rng(k).random((3, 3)) for k in range(9)]
        root = ET.fromstring(svg.heatmap_grid(panels, [str(k) for k in range(9)]))
        assert len(root.findall(f"{NS}rect")) == 81
        assert len(root.findall(f"{NS}text")) == 9


class TestCharts:
    def test_line_chart_skips_nonfinite(self):
        doc = svg.line_chart({"a": ([1, 2, 3], [1.0, np.nan, 3.0]), "b": ([1, 2], [0, -np.inf])}, "t")
        lines = ET.fromstring(doc).findall(f"{NS}polyline")
        assert len(lines) == 2
        assert len(lines[0].get("points").split()) == 2
        assert len(lines[1].get("points").split()) == 1

    def test_line_chart_extremes(self):
        doc = svg.line_chart({"a": ([0, 1, 2], [5.0, 9.0, 1.0])})
        pts = [tuple(map(float, p.split(","))) for p in
               ET.fromstring(doc).find(f"{NS}polyline").get("points").split()]
        ys = [p[1] for p in pts]
        assert ys.index(min(ys)) == 1 and ys.index(max(ys)) == 2  # svg y grows downwards

    def test_empty_chart(self):
        ET.fromstring(svg.line_chart({}))

    def test_bar_chart(self):
        doc = svg.bar_chart([3, 6, 9], [1.0, 4.0, 0.0], "V3")
        bars = rects(doc)
        heights = [float(b.get("height")) for b in bars]
        assert heights.index(max(heights)) == 1 and heights[2] == 0
