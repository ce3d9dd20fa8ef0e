"""Audit report container and its canonical JSON / CSV / text renderings."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import InputError

FORMATS = ("json", "csv_bundle", "text")


class Fixed(float):
    """A float that remembers how many decimals it is rendered with."""

    decimals = 3

    def __new__(cls, value, decimals: int | None = None):
        obj = super().__new__(cls, value)
        if decimals is not None:
            obj.decimals = decimals
        return obj


class Pct(Fixed):
    """A percentage; rendered with 2 decimals."""

    decimals = 2


def parse_fixed(literal: str) -> Fixed:
    """json parse_float hook keeping the literal's number of decimals."""
    _, _, frac = literal.partition(".")
    return Fixed(literal, len(frac.split("e")[0].split("E")[0]) if frac else 0)


def load_report(path: str | Path) -> "AuditReport":
    try:
        data = json.loads(Path(path).read_text("utf-8"), parse_float=parse_fixed)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read report {path}: {exc}") from exc
    return AuditReport.from_json(data)


def fmt_number(x: float) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if not math.isfinite(x):
        raise ValueError("non-finite number in report")
    s = f"{x:.{getattr(x, 'decimals', 3)}f}"
    # no negative zero
    return s[1:] if s.startswith("-") and float(s) == 0 else s


def canonical_json(obj: Any, indent: int = 2) -> str:
    """Sorted keys, fixed decimals (3, or 2 for percentages), trailing newline."""
    return _encode(obj, 0, indent) + "\n"


def _encode(obj: Any, level: int, indent: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, int, float)):
        return "null" if obj is None else fmt_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        body = ",\n".join(f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, level + 1, indent)}"
                          for k, v in items)
        return "{\n" + body + "\n" + end + "}"
    if isinstance(obj, (list, tuple, set, frozenset)):
        seq = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        if not seq:
            return "[]"
        body = ",\n".join(pad + _encode(v, level + 1, indent) for v in seq)
        return "[\n" + body + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__} in report")


@dataclass
class Table:
    name: str
    title: str
    columns: list[str]
    rows: list[list[Any]]

    def to_json(self) -> dict:
        return {"title": self.title, "columns": self.columns, "rows": self.rows}

    def cell_text(self, value: Any) -> str:
        if value is None:
            return "-"
        if isinstance(value, (list, tuple)):
            return ", ".join(self.cell_text(v) for v in value)
        if isinstance(value, (int, float)):
            return fmt_number(value)
        return str(value)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow(["" if v is None else self.cell_text(v) for v in row])
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [self.columns] + [[self.cell_text(v) for v in row] for row in self.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(self.columns))]
        lines = [self.title, "=" * len(self.title)]
        for n, row in enumerate(cells):
            parts = []
            for i, cell in enumerate(row):
                numeric = n > 0 and _is_numeric(self.rows[n - 1][i])
                parts.append(cell.rjust(widths[i]) if numeric else cell.ljust(widths[i]))
            lines.append("  ".join(parts).rstrip())
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _is_numeric(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


@dataclass
class AuditReport:
    fingerprint: dict
    stages: list[str]
    sections: dict[str, Any] = field(default_factory=dict)
    tables: dict[str, Table] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def add_table(self, table: Table) -> None:
        self.tables[table.name] = table

    def to_json(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "stages": self.stages,
            "sections": self.sections,
            "tables": {k: t.to_json() for k, t in self.tables.items()},
            "table_order": list(self.tables),
            "warnings": self.warnings,
        }

    @classmethod
    def from_json(cls, data: dict) -> "AuditReport":
        raw = data.get("tables", {})
        order = [n for n in data.get("table_order", []) if n in raw]
        order += sorted(n for n in raw if n not in order)
        tables = {
            name: Table(name, raw[name]["title"], list(raw[name]["columns"]), [list(r) for r in raw[name]["rows"]])
            for name in order
        }
        return cls(data.get("fingerprint", {}), list(data.get("stages", [])),
                   data.get("sections", {}), tables, list(data.get("warnings", [])))


def emit(report: AuditReport, format: str, out_dir: str | Path) -> list[Path]:
    """Write the report; returns the files written.

    ``json``: one canonical ``audit_report.json``. ``csv_bundle``: one CSV per
    table. ``text``: ``report.txt`` with every table as aligned text.
    """
    if format not in FORMATS:
        raise InputError(f"unknown format {format!r}; expected one of {FORMATS}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if format == "json":
            path = out / "audit_report.json"
            path.write_text(canonical_json(report.to_json()), encoding="utf-8")
            return [path]
        if format == "csv_bundle":
            written = []
            for name in sorted(report.tables):
                path = out / f"{name}.csv"
                path.write_text(report.tables[name].to_csv(), encoding="utf-8")
                written.append(path)
            return written
        path = out / "report.txt"
        path.write_text(render_text(report), encoding="utf-8")
        return [path]
    except OSError as exc:
        raise InputError(f"cannot write to {out}: {exc}") from exc


def render_text(report: AuditReport) -> str:
    blocks = [report.tables[name].to_text() for name in report.tables]
    if report.warnings:
        blocks.append("Warnings\n========\n" + "\n".join(report.warnings) + "\n")
    return "\n".join(blocks)
