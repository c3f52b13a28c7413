"""Scenario reports and their JSON / CSV / text serializations."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .tensor import PureState

SCHEMA_VERSION = "qrs-report/1"
SIG_DIGITS = 12


def fmt_number(x: float) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    x = float(x)
    if x == 0 or not math.isfinite(x):
        return "0" if x == 0 else repr(x)
    return format(x, f".{SIG_DIGITS}g")


def round_sig(x: float) -> float:
    """Round to 12 significant digits and drop negative zero."""
    return float(fmt_number(x)) + 0.0


def format_ket(state: PureState, precision: int = 6) -> str:
    """Compact ket notation, e.g. ``0.707107|0,1> - 0.707107|1,0>``."""
    parts = []
    for flat in np.flatnonzero(np.abs(state.amplitudes) > 10 ** (-precision)):
        amp = state.amplitudes[flat]
        idx = ",".join(str(i) for i in np.unravel_index(flat, state.space.dims))
        re, im = round(amp.real, precision) + 0.0, round(amp.imag, precision) + 0.0
        if im == 0:
            coeff = f"{re:g}"
        elif re == 0:
            coeff = f"{im:g}i"
        else:
            coeff = f"({re:g}{im:+g}i)"
        parts.append(f"{coeff}|{idx}>")
    body = " + ".join(parts).replace("+ -", "- ")
    return f"{body} @({','.join(state.names)})"


@dataclass
class Assertion:
    """A checked relation: ``actual`` against ``expected`` within ``tolerance``.

    ``mode`` is ``"eq"`` (absolute difference), ``"le"`` (actual may not exceed
    expected by more than the tolerance) or ``"ge"``.
    """

    name: str
    expected: float
    actual: float
    tolerance: float
    relation: str
    mode: str = "eq"

    @property
    def residual(self) -> float:
        if self.mode == "le":
            return max(self.actual - self.expected, 0.0)
        if self.mode == "ge":
            return max(self.expected - self.actual, 0.0)
        return abs(self.actual - self.expected)

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)


@dataclass
class Table:
    title: str
    relation: str
    columns: tuple[str, ...]
    rows: list[list[Any]] = field(default_factory=list)

    def add(self, *values):
        self.rows.append(list(values))


@dataclass
class ScenarioReport:
    name: str
    systems: list[tuple[str, int]] = field(default_factory=list)
    tables: list[Table] = field(default_factory=list)
    assertions: list[Assertion] = field(default_factory=list)
    findings: dict[str, Any] = field(default_factory=dict)

    def table(self, title: str, relation: str, columns: Sequence[str]) -> Table:
        t = Table(title, relation, tuple(columns))
        self.tables.append(t)
        return t

    def check(self, name, expected, actual, tolerance, relation, mode="eq") -> Assertion:
        a = Assertion(name, float(expected), float(actual), float(tolerance), relation, mode)
        self.assertions.append(a)
        return a

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)

    def get_table(self, title: str) -> Table:
        for t in self.tables:
            if t.title == title:
                return t
        raise KeyError(title)


def _json_value(v):
    if isinstance(v, PureState):
        return {
            "subsystems": list(v.names),
            "amplitudes": [[round_sig(a.real), round_sig(a.imag)] for a in v.amplitudes],
        }
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return round_sig(v)
    if isinstance(v, complex):
        return [round_sig(v.real), round_sig(v.imag)]
    if isinstance(v, np.ndarray):
        return [_json_value(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _json_value(x) for k, x in v.items()}
    return v


def _text_value(v) -> str:
    if isinstance(v, PureState):
        return format_ket(v)
    if isinstance(v, (bool, np.bool_)):
        return "yes" if v else "no"
    if isinstance(v, (float, np.floating)):
        return fmt_number(v)
    if isinstance(v, (complex, np.complexfloating)):
        sign = "-" if v.imag < 0 else "+"
        return f"{fmt_number(v.real)}{sign}{fmt_number(abs(v.imag))}i"
    if isinstance(v, (list, tuple)):
        return "(" + ", ".join(_text_value(x) for x in v) + ")"
    return str(v)


def report_to_dict(report: ScenarioReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": report.name,
        "passed": report.passed,
        "systems": [{"name": n, "dim": d} for n, d in report.systems],
        "tables": [
            {
                "title": t.title,
                "relation": t.relation,
                "columns": list(t.columns),
                "rows": [
                    dict({c: _json_value(v) for c, v in zip(t.columns, row)}, relation=t.relation)
                    for row in t.rows
                ],
            }
            for t in report.tables
        ],
        "assertions": [
            {
                "name": a.name,
                "relation": a.relation,
                "mode": a.mode,
                "expected": round_sig(a.expected),
                "actual": round_sig(a.actual),
                "residual": round_sig(a.residual),
                "tolerance": a.tolerance,
                "passed": a.passed,
            }
            for a in report.assertions
        ],
        "findings": _json_value(report.findings),
    }


def to_json(report: ScenarioReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"


CSV_COLUMNS = ("section", "title", "row", "column", "value", "relation")


def to_csv(report: ScenarioReport) -> str:
    """Long format: one line per table cell, assertion field and finding."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for t in report.tables:
        for i, row in enumerate(t.rows):
            for c, v in zip(t.columns, row):
                w.writerow(["table", t.title, i, c, _text_value(v), t.relation])
    for i, a in enumerate(report.assertions):
        for c, v in (
            ("expected", fmt_number(a.expected)),
            ("actual", fmt_number(a.actual)),
            ("residual", fmt_number(a.residual)),
            ("tolerance", repr(a.tolerance)),
            ("passed", "true" if a.passed else "false"),
        ):
            w.writerow(["assertion", a.name, i, c, v, a.relation])
    for k, v in report.findings.items():
        w.writerow(["finding", k, 0, "value", _text_value(v), ""])
    return buf.getvalue()


def to_text(report: ScenarioReport) -> str:
    out = [f"== {report.name} =="]
    if report.systems:
        out.append("systems: " + ", ".join(f"{n}:{d}" for n, d in report.systems))
    for t in report.tables:
        out.append("")
        out.append(f"-- {t.title}  [{t.relation}]")
        cells = [list(t.columns)] + [[_text_value(v) for v in row] for row in t.rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(t.columns))]
        for r in cells:
            out.append("  " + "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    if report.findings:
        out.append("")
        for k, v in report.findings.items():
            out.append(f"{k}: {_text_value(v)}")
    if report.assertions:
        out.append("")
        for a in report.assertions:
            status = "PASS" if a.passed else "FAIL"
            out.append(
                f"[{status}] {a.name}: expected {fmt_number(a.expected)}, actual "
                f"{fmt_number(a.actual)}, residual {fmt_number(a.residual)} "
                f"(tol {a.tolerance:g})  [{a.relation}]"
            )
    out.append("")
    out.append("result: " + ("PASS" if report.passed else "FAIL"))
    return "\n".join(out) + "\n"


FORMATTERS = {"json": to_json, "csv": to_csv, "text": to_text}
