import math
from pathlib import Path

import numpy as np
import pytest

from qrs import run_cat
from qrs.script import (
    ExpectStmt,
    MeasureStep,
    ScriptError,
    ScriptRuntimeError,
    StateDef,
    diagnose,
    execute,
    parse,
    parse_file,
    serialize,
    tokenize,
)

ROOT = Path(__file__).resolve().parents[1]
SCRIPTS = sorted((ROOT / "scripts").glob("*.qrs"))

HEADER = "system A:2;\nsystem B:2;\n"


@pytest.mark.parametrize("path", SCRIPTS, ids=lambda p: p.stem)
def test_golden_script_runs_and_passes(path):
    doc = parse_file(path)
    report = execute(doc, str(path))
    assert report.passed, [a.name for a in report.assertions if not a.passed]
    assert report.tables or report.assertions


@pytest.mark.parametrize("path", SCRIPTS, ids=lambda p: p.stem)
def test_golden_script_round_trip(path):
    doc = parse_file(path)
    text = serialize(doc)
    again = parse(text)
    assert again == doc
    assert serialize(again) == text


def test_cat_script_matches_canned_scenario():
    report = execute(parse_file(ROOT / "scripts" / "cat.qrs"))
    canned = run_cat(math.sqrt(0.3), math.sqrt(0.7))
    script_rows = report.get_table("possible_states(cat)").rows
    canned_rows = canned.get_table("cat possible states").rows
    assert len(script_rows) == len(canned_rows) == 2
    for s, c in zip(script_rows, canned_rows):
        assert s[2] == pytest.approx(c[1], abs=1e-12)
        assert s[3].fidelity(c[2]) == pytest.approx(1.0, abs=1e-12)


def test_tokenize_kinds():
    tokens, diags = tokenize("state s = 0.5i|0>@A; # note\n")
    assert not diags
    kinds = [t.kind for t in tokens]
    assert kinds[:4] == ["ident", "ident", "punct", "imag"]
    assert kinds[-1] == "eof"


def test_singlet_literal_within_slack_is_accepted():
    src = HEADER + "state s = 0.70710678|0,1>@(A,B) - 0.70710678|1,0>@(A,B);\nisolated s;\n"
    doc = parse(src)
    st = doc.statements[2]
    assert isinstance(st, StateDef)
    assert abs(st.terms[0].coeff - 1 / math.sqrt(2)) < 1e-6


def test_normalize_keyword_rescales():
    doc = parse(HEADER + "state s = 1|0,0>@(A,B) + 1|1,1>@(A,B) normalize;\nisolated s;\n"
                "expect purity(A) == 0.5;\n")
    assert execute(doc).passed


def test_complex_and_reordered_kets():
    # |0,1>@(B,A) is |1,0>@(A,B)
    src = HEADER + "state s = (0.6+0i)|0,1>@(A,B) + 0.8i|0,1>@(B,A);\nisolated s;\n" \
                   "expect joint((A, 0), (B, 0)) == 0.64 tol 1e-12;\n"
    assert execute(parse(src)).passed
    # |1,0>@(B,A) is the first ket again, so the state is a product
    src = HEADER + "state s = (0.6+0i)|0,1>@(A,B) + 0.8i|1,0>@(B,A);\nisolated s;\n" \
                   "expect purity(A) == 1 tol 1e-12;\n"
    assert execute(parse(src)).passed


def test_multiple_errors_are_all_reported():
    src = "system A:2;\nstate s = 1|5>@A;\nstate t = 1|0>@Z;\nsystem A:2;\n"
    doc, diags = diagnose(src)
    assert doc is None
    assert [(d.span.line, d.span.column) for d in diags] == [(2, 13), (3, 16), (4, 8)]


def test_script_error_formats_with_filename():
    with pytest.raises(ScriptError) as exc:
        parse("system A:2$;\n", "bad.qrs")
    line = exc.value.diagnostics[0].format("bad.qrs")
    assert line.startswith("bad.qrs:1:11: error:")


def test_declaration_only_document_needs_no_isolated():
    doc = parse(HEADER)
    assert doc.systems == {"A": 2, "B": 2}
    assert doc.root is None


def test_measure_spin_and_pointers_parse():
    src = HEADER + "system M:2;\nstate s = 1|0,1>@(A,B);\nisolated s;\n" \
                   "measure A in spin(30) into M pointers(0, 1);\n"
    doc = parse(src)
    m = doc.statements[-1]
    assert isinstance(m, MeasureStep)
    assert m.basis == "spin" and m.angle == 30.0 and m.pointers == (0, 1)


def test_expect_failure_reports_line():
    doc = parse(HEADER + "state s = 1|0,0>@(A,B);\nisolated s;\nexpect purity(A) == 0.5;\n")
    report = execute(doc, "x.qrs")
    assert not report.passed
    a = report.assertions[0]
    assert a.name.startswith("line 5:")
    assert a.relation == "x.qrs:5:8"


def test_runtime_error_carries_query_span():
    doc = parse(HEADER + "state s = 1|0,0>@(A,B);\nisolated s;\nquery joint((A, 3));\n")
    with pytest.raises(ScriptRuntimeError) as exc:
        execute(doc, "x.qrs")
    assert "x.qrs:5:7" in str(exc.value)


def test_sample_seed_precedence():
    src = HEADER + "seed 7;\nstate s = 0.6|0,0>@(A,B) + 0.8|1,1>@(A,B);\nisolated s;\nquery sample(A);\n"
    doc = parse(src)
    assert doc.seed == 7
    assert execute(doc).findings["seed"] == 7
    assert execute(doc, seed=11).findings["seed"] == 11
    draws = {execute(doc, seed=s).get_table("sample(A)").rows[0][1] for s in range(30)}
    assert draws == {0, 1}


def test_rotation_matches_closed_form():
    src = HEADER + "state s = 1|0,0>@(A,B);\nisolated s;\napply ry(A, 60);\nquery reduce(A);\n"
    report = execute(parse(src))
    rho = np.array([[complex(x) for x in row[2:]] for row in report.get_table("reduce(A)").rows])
    # exp(-i theta Sy)|up> = cos(theta/2)|up> + sin(theta/2)|down>
    c, s = math.cos(math.radians(30)), math.sin(math.radians(30))
    assert np.allclose(rho, [[c * c, c * s], [c * s, s * s]], atol=1e-12)


def test_expect_tolerance_negative_rejected():
    doc, diags = diagnose(HEADER + "state s = 1|0,0>@(A,B);\nisolated s;\nexpect purity(A) == 1 tol -1;\n")
    assert doc is None and "non-negative" in diags[0].message


def test_serialize_expect_statement():
    doc = parse(HEADER + "state s = 1|0,0>@(A,B);\nisolated s;\nexpect bell(A, B, 0, 90, recorders) == 0.25 tol 1e-9;\n")
    st = doc.statements[-1]
    assert isinstance(st, ExpectStmt)
    assert serialize(doc).splitlines()[-1] == "expect bell(A, B, 0.0, 90.0, recorders) == 0.25 tol 1e-09;"
