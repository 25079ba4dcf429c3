"""Deterministic artifact helpers: float text, JSON, manifests, CSV."""

from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavtraj.artifacts import (dump_json, fmt, load_results_csv,
                               manifest_dict, round_floats, sha256_text,
                               write_manifest, write_results_csv)


def test_fmt_basic_forms():
    assert fmt(0.1) == "0.1"
    assert fmt(1.0) == "1"
    assert fmt(-0.0) == "0"
    assert fmt(float("nan")) == "nan"
    assert fmt(float("inf")) == "inf"
    assert fmt(float("-inf")) == "-inf"
    assert fmt(123456789012.0) == "1.23456789e+11"


def test_fmt_nine_significant_digits():
    assert fmt(3.141592653589793) == "3.14159265"
    assert fmt(1e-14) == "1e-14"


@settings(max_examples=300, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False,
                 min_value=-1e30, max_value=1e30))
def test_fmt_round_trips_to_nine_digits(x):
    back = float(fmt(x))
    if x == 0.0:
        assert back == 0.0
    else:
        assert back == pytest.approx(x, rel=1e-8)


def test_round_floats_recurses():
    obj = {"a": [0.30000000000000004, {"b": (1.0, 2)}], "c": "s"}
    out = round_floats(obj)
    assert out["a"][0] == 0.3
    assert out["a"][1]["b"] == [1.0, 2]
    assert out["c"] == "s"


def test_dump_json_is_canonical(tmp_path):
    path = tmp_path / "r.json"
    dump_json({"b": 2.0, "a": 0.1 + 0.2}, path)
    text = path.read_text()
    assert text == '{\n  "a": 0.3,\n  "b": 2.0\n}\n'
    dump_json({"a": 0.3, "b": 2.0}, tmp_path / "r2.json")
    assert (tmp_path / "r2.json").read_text() == text


def test_sha256_text_known_value():
    assert sha256_text("") == ("e3b0c44298fc1c149afbf4c8996fb924"
                               "27ae41e4649b934ca495991b7852b855")


def test_manifest_contents(tmp_path):
    man = manifest_dict("scenario: x\n", tolerances={"tol_kkt": 1e-6},
                        warm_start_source="point_00",
                        extra={"sweep_param": "period_s"})
    assert man["tool"] == "uavtraj"
    assert man["version"] == "0.1.0"
    assert man["scenario_sha256"] == sha256_text("scenario: x\n")
    assert man["tolerances"] == {"tol_kkt": 1e-6}
    assert man["warm_start_source"] == "point_00"
    assert man["sweep_param"] == "period_s"

    path = tmp_path / "manifest.json"
    write_manifest(path, "scenario: x\n", tolerances={"tol_kkt": 1e-6})
    loaded = json.loads(path.read_text())
    assert loaded["scenario_sha256"] == man["scenario_sha256"]
    assert loaded["warm_start_source"] is None


def test_results_csv_round_trip(tmp_path):
    path = tmp_path / "rows.csv"
    header = ["label", "value", "count", "flag"]
    rows = [["a", 1.5, 3, True], ["b", float("nan"), 0, False],
            ["c", -0.0, -2, True]]
    write_results_csv(path, header, rows)
    text = path.read_text().splitlines()
    assert text[0] == "label,value,count,flag"
    assert text[1] == "a,1.5,3,true"
    assert text[2] == "b,nan,0,false"
    assert text[3] == "c,0,-2,true"

    back = load_results_csv(path)
    assert back[0] == {"label": "a", "value": 1.5, "count": 3, "flag": True}
    assert math.isnan(back[1]["value"])
    assert back[1]["flag"] is False
    assert back[2]["value"] == 0


def test_results_csv_byte_identical_reruns(tmp_path):
    rows = [["x", 0.1 + 0.2, 1, False]]
    write_results_csv(tmp_path / "a.csv", ["k", "v", "n", "f"], rows)
    write_results_csv(tmp_path / "b.csv", ["k", "v", "n", "f"], rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
