import xml.etree.ElementTree as ET

import pytest

from kinn.svg import _nice_ticks, line_chart

NS = "{http://www.w3.org/2000/svg}"


def test_line_chart_is_well_formed(tmp_path):
    path = tmp_path / "c.svg"
    line_chart(path, "A & B", [0, 1, 2, 3], [("one", [1, 2, 3, 4]), ("two", [4, 3, float("nan"), 1])], "x", "y")
    root = ET.parse(path).getroot()
    assert root.tag == NS + "svg"
    texts = [t.text for t in root.iter(NS + "text")]
    assert "A & B" in texts and "one" in texts and "two" in texts
    assert len(list(root.iter(NS + "polyline"))) >= 2


def test_line_chart_constant_and_empty(tmp_path):
    line_chart(tmp_path / "flat.svg", "flat", [0, 1], [("c", [5, 5])])
    ET.parse(tmp_path / "flat.svg")
    with pytest.raises(ValueError):
        line_chart(tmp_path / "none.svg", "none", [0, 1], [])


def test_nice_ticks():
    assert _nice_ticks(0, 10) == [0, 2, 4, 6, 8, 10]
    assert _nice_ticks(0.0, 1.0) == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
    assert _nice_ticks(3, 3) == [3]
