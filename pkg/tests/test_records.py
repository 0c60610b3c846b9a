import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kramerslab.landscape import CriticalPoint
from kramerslab.potential import PotentialParams, builtin
from kramerslab.rate import KramersPrediction
from kramerslab.records import dumps, format_cell, read_csv, read_json, to_jsonable, write_csv, write_dat, write_json


def test_non_finite_becomes_null():
    assert json.loads(dumps({"a": float("nan"), "b": np.inf, "c": [1.0, -np.inf]})) == \
        {"a": None, "b": None, "c": [1.0, None]}


def test_numpy_types_converted():
    out = to_jsonable({"x": np.arange(3), "f": np.float64(0.5), "b": np.bool_(True), 3: "k"})
    assert out == {"x": [0, 1, 2], "f": 0.5, "b": True, "3": "k"}
    assert type(out["x"][0]) is int


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": 2}) == dumps({"a": 2, "b": 1})
    assert dumps({}).endswith("\n")


def test_format_cell():
    assert format_cell(True) == "1"
    assert format_cell(np.int64(7)) == "7"
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell("x") == "x"


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_csv_round_trip_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("csv") / "v.csv"
    write_csv(path, ["i", "v"], [(i, v) for i, v in enumerate(values)])
    header, cols = read_csv(path)
    assert header == ["i", "v"]
    assert cols["v"].tolist() == values


def test_csv_line_endings(tmp_path):
    path = tmp_path / "a.csv"
    write_csv(path, ["a"], [(1.5,)])
    assert path.read_bytes() == b"a\r\n1.5\r\n"


def test_read_csv_text_column(tmp_path):
    path = tmp_path / "a.csv"
    write_csv(path, ["label", "v"], [("plus", 1.0), ("minus", -1.0)])
    _, cols = read_csv(path)
    assert cols["label"] == ["plus", "minus"]


def test_empty_csv(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("")
    with pytest.raises(ValueError):
        read_csv(path)


def test_dat_format(tmp_path):
    path = tmp_path / "c.dat"
    write_dat(path, [np.array([0.0, 1.0]), np.array([2.0, 3.0])], ["x", "y"], "demo")
    lines = path.read_text().splitlines()
    assert lines[0] == "# demo" and lines[1] == "# x y"
    assert np.loadtxt(path).tolist() == [[0.0, 2.0], [1.0, 3.0]]


def test_json_round_trip_records(tmp_path):
    pred = KramersPrediction(0.25, 4.44, "quadratic_1d", 0.1, "O(1)")
    rec = {"prediction": pred.to_dict(), "potential": PotentialParams("quartic1d").to_dict(),
           "critical": CriticalPoint.at(builtin("quartic1d"), [1.0]).to_row()}
    write_json(tmp_path / "r.json", rec)
    back = read_json(tmp_path / "r.json")
    assert KramersPrediction.from_dict(back["prediction"]) == pred
    assert PotentialParams.from_dict(back["potential"]).to_dict() == rec["potential"]
    assert back["critical"]["index"] == 0
    assert math.isclose(back["critical"]["lambda0"], 2.0)
