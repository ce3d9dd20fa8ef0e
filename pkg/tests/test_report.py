import json

import pytest

from skillaudit.errors import InputError
from skillaudit.report import AuditReport, Fixed, Pct, Table, canonical_json, emit, load_report, render_text


def small_report():
    r = AuditReport(fingerprint={"dataset": "abc"}, stages=["bids"])
    r.add_table(Table("bids_median_mean", "Bid CPMs", ["Persona", "Median", "Mean"],
                      [["Vanilla", Fixed(0.0300001), Fixed(0.153)], ["Dating", 0.0686815, None]]))
    r.add_table(Table("share", "Share", ["Org", "Pct"], [["Amazon", Pct(88.93)]]))
    return r


def test_canonical_json_format():
    text = canonical_json({"b": 1, "a": [0.5, Pct(9.4), None, True, -0.0001]})
    assert text.endswith("\n")
    data = json.loads(text)
    assert list(data) == ["a", "b"]
    assert '0.500' in text and '9.40' in text and '0.000' in text and '-0.000' not in text


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_json_twice_identical(tmp_path):
    a = emit(small_report(), "json", tmp_path / "a")[0].read_bytes()
    b = emit(small_report(), "json", tmp_path / "b")[0].read_bytes()
    assert a == b


def test_csv_bundle_one_file_per_table(tmp_path):
    files = emit(small_report(), "csv_bundle", tmp_path)
    assert sorted(p.name for p in files) == ["bids_median_mean.csv", "share.csv"]
    assert (tmp_path / "bids_median_mean.csv").read_text().splitlines()[1] == "Vanilla,0.030,0.153"


def test_text_row():
    text = render_text(small_report())
    vanilla = next(line for line in text.splitlines() if line.startswith("Vanilla"))
    assert vanilla.split() == ["Vanilla", "0.030", "0.153"]
    assert "Dating" in text and " -" in text


def test_unknown_format(tmp_path):
    with pytest.raises(InputError):
        emit(small_report(), "xml", tmp_path)


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(InputError):
        emit(small_report(), "json", blocker / "sub")


def test_json_round_trip_keeps_bytes_and_order(tmp_path):
    path = emit(small_report(), "json", tmp_path)[0]
    again = load_report(path)
    assert list(again.tables) == ["bids_median_mean", "share"]
    out = emit(again, "json", tmp_path / "again")[0]
    assert out.read_bytes() == path.read_bytes()
    assert render_text(again) == render_text(small_report())


def test_demo_text_vanilla_row(demo_report):
    line = next(ln for ln in demo_report.tables["bids_median_mean"].to_text().splitlines()
                if ln.startswith("Vanilla"))
    assert line.split()[1:] == ["0.030", "0.153"]
