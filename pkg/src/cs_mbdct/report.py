"""Text tables and machine-readable records of evaluation results."""

from __future__ import annotations

import json

SENSING_PREFIX = {"random": "RS", "loaded": "LS"}
KIND_LABEL = {"bow": "MBDCT", "external": "EXT", "fused": "(EXT+MBDCT)"}
_KIND_ORDER = ("bow", "external", "fused")


def _record(r) -> dict:
    return r.record() if hasattr(r, "record") else dict(r)


def record_line(r) -> str:
    """One JSON object per line, keys sorted so equal results give equal bytes."""
    return json.dumps(_record(r), sort_keys=True, separators=(",", ":"))


def read_records(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def column_label(rec: dict, with_energy: bool = False) -> str:
    prefix = SENSING_PREFIX.get(rec.get("sensing"), str(rec.get("sensing", "?")).upper())
    label = f"{prefix}_{KIND_LABEL.get(rec.get('kind'), rec.get('kind'))}"
    if with_energy:
        label += f" {rec.get('energy_level')}"
    return label


def report_table(reports) -> str:
    """Test error rates in percent: one row per measurement rate (descending),
    one column per sensing/feature kind (and energy level when several occur)."""
    recs = [_record(r) for r in reports]
    with_energy = len({r.get("energy_level") for r in recs}) > 1

    def col_key(r):
        kind = r.get("kind")
        order = _KIND_ORDER.index(kind) if kind in _KIND_ORDER else len(_KIND_ORDER)
        return (r.get("sensing") != "random", order, str(r.get("energy_level")))

    cols = []
    for r in sorted(recs, key=col_key):
        label = column_label(r, with_energy)
        if label not in cols:
            cols.append(label)
    cells = {}
    for r in recs:
        cells[(float(r["rate"]), column_label(r, with_energy))] = 100.0 * float(r["error_rate"])
    rates = sorted({rate for rate, _ in cells}, reverse=True)

    widths = [max(4, len(c)) for c in cols]
    lines = [" | ".join(["MR  "] + [c.rjust(w) for c, w in zip(cols, widths)])]
    lines.append("-+-".join(["-" * 4] + ["-" * w for w in widths]))
    for rate in rates:
        row = [f"{rate:.2f}"]
        for c, w in zip(cols, widths):
            v = cells.get((rate, c))
            row.append(("-" if v is None else f"{v:.2f}").rjust(w))
        lines.append(" | ".join(row))
    return "\n".join(lines) + "\n"
