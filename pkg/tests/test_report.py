import json

from cs_mbdct.classifier import EvalReport
from cs_mbdct.report import read_records, record_line, report_table
import numpy as np


def rec(rate, err, kind="bow", sensing="random", energy="E100"):
    return {"rate": rate, "error_rate": err, "kind": kind, "sensing": sensing, "energy_level": energy}


def body(table):
    return table.splitlines()[2:]


def test_empty_table_has_header_only():
    lines = report_table([]).splitlines()
    assert len(lines) == 2 and lines[0].startswith("MR")


def test_one_report_one_row():
    rows = body(report_table([rec(0.25, 0.0726)]))
    assert rows == ["0.25 |     7.26"]


def test_rows_ordered_by_descending_rate():
    recs = [rec(r, e) for r, e in [(0.05, 0.1428), (0.25, 0.0726), (0.01, 0.4133), (0.1, 0.0946)]]
    rows = body(report_table(recs))
    assert [r.split("|")[0].strip() for r in rows] == ["0.25", "0.10", "0.05", "0.01"]
    assert [r.split("|")[1].strip() for r in rows] == ["7.26", "9.46", "14.28", "41.33"]


def test_columns_per_kind_and_energy():
    recs = [rec(0.25, 0.1), rec(0.25, 0.2, "external"), rec(0.25, 0.05, "fused"), rec(0.1, 0.3)]
    head, _, r1, r2 = report_table(recs).splitlines()
    assert [c.strip() for c in head.split("|")] == ["MR", "RS_MBDCT", "RS_EXT", "RS_(EXT+MBDCT)"]
    assert [c.strip() for c in r2.split("|")] == ["0.10", "30.00", "-", "-"]
    two = report_table([rec(0.25, 0.1, energy="E90"), rec(0.25, 0.2, energy="E100")])
    assert "RS_MBDCT E90" in two and "RS_MBDCT E100" in two
    assert "LS_MBDCT" in report_table([rec(0.25, 0.1, sensing="loaded")])


def test_record_line_is_canonical(tmp_path):
    r = EvalReport(0.125, np.eye(2, dtype=int), {"rate": 0.25, "kind": "bow", "k": 3})
    line = record_line(r)
    assert line == '{"error_rate":0.125,"k":3,"kind":"bow","rate":0.25}'
    p = tmp_path / "r.jsonl"
    p.write_text(line + "\n")
    assert read_records(p) == [json.loads(line)]
