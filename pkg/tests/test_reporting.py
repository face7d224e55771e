"""Tests for report writing and stage timing"""

import json

import pytest

from thuemorse_lab.metrics import StageTimer
from thuemorse_lab.utils import SCHEMA_VERSION, ReportWriter


def test_json_report(tmp_path):
    writer = ReportWriter(str(tmp_path))
    path = writer.write_json("gamma", {"b": 2, "a": 1})
    text = (tmp_path / "gamma.json").read_text()
    assert path.endswith("gamma.json")
    assert text.endswith("\n")
    assert "\r" not in text
    report = json.loads(text)
    assert report == {"schema_version": SCHEMA_VERSION, "kind": "gamma", "a": 1, "b": 2}
    assert text.index('"a"') < text.index('"b"')


def test_csv_report(tmp_path):
    writer = ReportWriter(str(tmp_path / "nested"))
    rows = [{"n": 1, "value": 0.5}, {"n": 2, "value": 0.25}]
    writer.write("profile", {"ignored": True}, rows, "csv")
    assert (tmp_path / "nested" / "profile.csv").read_text() == "n,value\n1,0.5\n2,0.25\n"


def test_stage_timer_statistics():
    timer = StageTimer()
    for value in (1.0, 2.0, 3.0, 4.0):
        timer.record("bands", value)
    stats = timer.get_statistics("bands")
    assert stats["count"] == 4
    assert stats["mean"] == 2.5
    assert stats["min"] == 1.0 and stats["max"] == 4.0
    assert timer.total_ms() == 10.0
    assert timer.get_statistics("missing") == {}
    assert set(timer.get_statistics()) == {"bands"}


def test_stage_timer_records_failures():
    timer = StageTimer()
    with pytest.raises(RuntimeError):
        with timer.time("hunt"):
            raise RuntimeError("boom")
    assert timer.get_statistics("hunt")["count"] == 1
