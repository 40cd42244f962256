import json
import os
import tempfile
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longliq.io import config_hash, read_csv, write_csv, write_json, write_table
from longliq.svg import line_chart, nice_ticks


def test_config_hash_is_canonical():
    assert config_hash({"a": 1, "b": [1.0, 2]}) == config_hash({"b": [1.0, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})
    assert len(config_hash({})) == 16
    assert config_hash({"x": np.float64(0.5)}) == config_hash({"x": 0.5})


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
@settings(max_examples=50, deadline=None)
def test_csv_round_trips_floats_exactly(values):
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "v.csv")
        write_csv(path, ["i", "v"], [(i, v) for i, v in enumerate(values)], {"seed": 3})
        meta, cols, data = read_csv(path)
    assert meta == {"seed": "3"} and cols == ["i", "v"]
    assert data[:, 1].tolist() == values


def test_csv_format(tmp_path):
    path = write_table(tmp_path / "t.csv", ["n", "x"], np.array([[0, 0.1], [1, 1e-20]]),
                       {"config_hash": "abc", "seed": 1}, int_columns=("n",))
    raw = path.read_bytes()
    assert raw.startswith(b"# config_hash=abc;seed=1\r\nn,x\r\n0,0.1\r\n1,1e-20\r\n")


def test_json_meta_and_nan(tmp_path):
    path = write_json(tmp_path / "s.json", {"x": np.array([1.0, np.nan]), "flag": np.bool_(True)},
                      {"config_hash": "abc", "seed": 2})
    d = json.loads(path.read_text())
    assert d["x"] == [1.0, None] and d["flag"] is True
    assert d["meta"]["config_hash"] == "abc" and d["meta"]["seed"] == 2 and "version" in d["meta"]


@pytest.mark.parametrize("lo,hi", [(0, 50), (-0.37, 5.2), (1e-5, 3e-5), (3, 3)])
def test_nice_ticks_cover_range(lo, hi):
    ticks = nice_ticks(lo, hi)
    assert ticks[0] <= lo and ticks[-1] >= hi
    steps = np.diff(ticks)
    assert np.allclose(steps, steps[0])
    mant = steps[0] / 10 ** np.floor(np.log10(steps[0]))
    assert min(abs(mant - m) for m in (1, 2, 5, 10)) < 1e-9


def test_line_chart_is_valid_svg():
    t = np.linspace(0, 50, 11)
    svg = line_chart([(t, np.sin(t)), (t, np.cos(t))], "a < b", "t", "X_t", meta={"seed": 7})
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    assert len(root.findall(f"{ns}polyline")) == 2
    assert json.loads(root.find(f"{ns}metadata").text) == {"seed": 7}
    assert any(el.text == "a < b" for el in root.iter(f"{ns}text"))
