"""Canonical text form of a :class:`ScriptDocument`.

Floats are written with ``repr`` so that parsing the output gives back the
exact same numbers.
"""

from __future__ import annotations

from .document import (
    ExpectStmt,
    IsolatedDecl,
    MeasureStep,
    Query,
    QueryStmt,
    RotateStep,
    ScriptDocument,
    SeedDecl,
    StateDef,
    SystemDecl,
    Term,
)


def _num(x: float) -> str:
    return repr(float(x) + 0.0)


def _coeff(c: complex) -> tuple[str, str]:
    """Return (sign, magnitude text) for a ket coefficient."""
    re, im = c.real + 0.0, c.imag + 0.0
    if im == 0:
        return ("-" if re < 0 else "+"), _num(abs(re))
    if re == 0:
        return ("-" if im < 0 else "+"), _num(abs(im)) + "i"
    op = "-" if im < 0 else "+"
    return "+", f"({_num(re)}{op}{_num(abs(im))}i)"


def _ket(t: Term) -> str:
    where = t.systems[0] if len(t.systems) == 1 else "(" + ",".join(t.systems) + ")"
    return "|" + ",".join(str(i) for i in t.indices) + ">@" + where


def _subset(names) -> str:
    return "+".join(names)


def format_query(q: Query) -> str:
    if q.kind in ("reduce", "possible_states", "purity", "sample"):
        args = _subset(q.subsets[0])
    elif q.kind == "joint":
        args = ", ".join(f"({_subset(s)}, {j})" for s, j in zip(q.subsets, q.indices))
    elif q.kind == "nested":
        args = f"{_subset(q.subsets[0])}, {q.indices[0]}, {_subset(q.subsets[1])}, {q.indices[1]}"
    else:
        parts = [q.subsets[0][0], q.subsets[1][0]] + [_num(a) for a in q.angles]
        if q.recorders:
            parts.append("recorders")
        args = ", ".join(parts)
    return f"{q.kind}({args})"


def format_statement(s) -> str:
    if isinstance(s, SystemDecl):
        return f"system {s.name}:{s.dim};"
    if isinstance(s, StateDef):
        body = []
        for k, t in enumerate(s.terms):
            sign, mag = _coeff(t.coeff)
            if k == 0:
                body.append(("-" if sign == "-" else "") + mag + _ket(t))
            else:
                body.append(f"{sign} {mag}{_ket(t)}")
        tail = " normalize" if s.normalize else ""
        return f"state {s.name} = {' '.join(body)}{tail};"
    if isinstance(s, IsolatedDecl):
        return f"isolated {s.state};"
    if isinstance(s, SeedDecl):
        return f"seed {s.value};"
    if isinstance(s, MeasureStep):
        if s.basis == "computational":
            basis = "computational"
        elif s.basis == "spin":
            basis = f"spin({_num(s.angle)})"
        else:
            basis = f"basis({', '.join(s.states)})"
        ptr = "" if s.pointers is None else f" pointers({', '.join(str(p) for p in s.pointers)})"
        return f"measure {_subset(s.target)} in {basis} into {s.device}{ptr};"
    if isinstance(s, RotateStep):
        return f"apply {s.gate}({s.system}, {_num(s.angle)});"
    if isinstance(s, QueryStmt):
        return f"query {format_query(s.query)};"
    if isinstance(s, ExpectStmt):
        tol = "" if s.tol is None else f" tol {_num(s.tol)}"
        return f"expect {format_query(s.query)} == {_num(s.value)}{tol};"
    raise TypeError(f"not a statement: {s!r}")


def serialize(doc: ScriptDocument) -> str:
    return "".join(format_statement(s) + "\n" for s in doc.statements)
