"""Lexer and recovering recursive-descent parser for ``.qrs`` scripts.

The parser never stops at the first problem: after an error it skips to the
next ``;`` and carries on, so one run reports every broken statement. Name
resolution and dimension checks happen in the same pass, in source order,
which is also what makes "declared before use" hold.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .document import (
    GATES,
    Diagnostic,
    ExpectStmt,
    IsolatedDecl,
    MeasureStep,
    Query,
    QueryStmt,
    RotateStep,
    ScriptDocument,
    ScriptError,
    SeedDecl,
    SourceSpan,
    StateDef,
    SystemDecl,
    Term,
)

NORM_SLACK = 1e-6
ORTHO_TOL = 1e-10
INDEX_ALIASES = {"up": 0, "down": 1}
PUNCT = ("==", ";", ":", "=", "+", "-", "*", ",", "(", ")", "|", ">", "@")

_NUMBER = re.compile(r"(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_WORD_TAIL = re.compile(r"[A-Za-z0-9_.]*")


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, float, imag, punct, error, eof
    text: str
    span: SourceSpan
    value: object = None

    def describe(self) -> str:
        if self.kind == "eof":
            return "end of input"
        return f"{self.text!r}"


def tokenize(source: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    for lineno, line in enumerate(source.splitlines(), start=1):
        col = 0
        n = len(line)
        while col < n:
            ch = line[col]
            if ch.isspace():
                col += 1
                continue
            if ch == "#":
                break
            m = _NUMBER.match(line, col)
            if m:
                end = m.end()
                text = m.group()
                kind, value = ("float", float(text)) if re.search(r"[.eE]", text) else ("int", int(text))
                if end < n and line[end] == "i" and not (end + 1 < n and _WORD_TAIL.match(line, end + 1).group()[:1]):
                    tokens.append(Token("imag", line[col:end + 1], SourceSpan(lineno, col + 1, end + 1 - col),
                                        complex(0, float(text))))
                    col = end + 1
                    continue
                if end < n and (line[end].isalnum() or line[end] in "_."):
                    end += len(_WORD_TAIL.match(line, end).group())
                    bad = line[col:end]
                    span = SourceSpan(lineno, col + 1, end - col)
                    diags.append(Diagnostic("error", f"malformed number {bad!r}", span))
                    tokens.append(Token("error", bad, span))
                    col = end
                    continue
                tokens.append(Token(kind, text, SourceSpan(lineno, col + 1, end - col), value))
                col = end
                continue
            m = _IDENT.match(line, col)
            if m:
                tokens.append(Token("ident", m.group(), SourceSpan(lineno, col + 1, m.end() - col)))
                col = m.end()
                continue
            for p in PUNCT:
                if line.startswith(p, col):
                    tokens.append(Token("punct", p, SourceSpan(lineno, col + 1, len(p))))
                    col += len(p)
                    break
            else:
                span = SourceSpan(lineno, col + 1, 1)
                diags.append(Diagnostic("error", f"unexpected character {ch!r}", span))
                tokens.append(Token("error", ch, span))
                col += 1
    last = tokens[-1].span if tokens else SourceSpan(1, 1, 1)
    end_span = SourceSpan(last.line, last.column + last.length - 1, 1)
    tokens.append(Token("eof", "", end_span))
    return tokens, diags


class _Abort(Exception):
    pass


def _join(span_a: SourceSpan, span_b: SourceSpan) -> SourceSpan:
    if span_a.line != span_b.line:
        return span_a
    return SourceSpan(span_a.line, span_a.column, span_b.column + span_b.length - span_a.column)


class _Parser:
    def __init__(self, tokens: list[Token], diags: list[Diagnostic]):
        self.name_spans: dict[str, SourceSpan] = {}
        self.toks = tokens
        self.pos = 0
        self.diags = diags
        self.systems: dict[str, int] = {}
        self.states: dict[str, tuple[tuple[str, ...], np.ndarray]] = {}
        self.world: list[str] | None = None
        self.devices: set[str] = set()
        self.first_step: SourceSpan | None = None
        self.isolated_seen = False

    # -- token helpers
    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        tok = self.peek()
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def is_punct(self, text: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.kind == "punct" and t.text == text

    def is_word(self, text: str) -> bool:
        t = self.peek()
        return t.kind == "ident" and t.text == text

    def fail(self, tok: Token, message: str):
        self.diags.append(Diagnostic("error", message, tok.span))
        raise _Abort

    def semantic(self, span: SourceSpan, message: str) -> None:
        self.diags.append(Diagnostic("error", message, span))

    def punct(self, text: str, what: str | None = None) -> Token:
        if not self.is_punct(text):
            tok = self.peek()
            self.fail(tok, f"expected '{text}'{' ' + what if what else ''}, found {tok.describe()}")
        return self.advance()

    def word(self, text: str) -> Token:
        if not self.is_word(text):
            tok = self.peek()
            self.fail(tok, f"expected keyword '{text}', found {tok.describe()}")
        return self.advance()

    def ident(self, what: str) -> Token:
        tok = self.peek()
        if tok.kind != "ident":
            self.fail(tok, f"expected identifier ({what}), found {tok.describe()}")
        return self.advance()

    def integer(self, what: str) -> Token:
        tok = self.peek()
        if tok.kind != "int":
            self.fail(tok, f"expected integer ({what}), found {tok.describe()}")
        return self.advance()

    def number(self, what: str) -> tuple[float, SourceSpan]:
        sign, first = 1.0, self.peek()
        if self.is_punct("-") or self.is_punct("+"):
            sign = -1.0 if self.advance().text == "-" else 1.0
        tok = self.peek()
        if tok.kind not in ("int", "float"):
            self.fail(tok, f"expected number ({what}), found {tok.describe()}")
        self.advance()
        return sign * float(tok.value), _join(first.span, tok.span)

    def subset(self, what: str) -> tuple[tuple[str, ...], SourceSpan]:
        first = self.ident(what)
        names, last = [first.text], first
        self.name_spans = {first.text: first.span}
        while self.is_punct("+") and self.peek(1).kind == "ident":
            self.advance()
            last = self.advance()
            names.append(last.text)
            self.name_spans.setdefault(last.text, last.span)
        span = _join(first.span, last.span)
        if len(set(names)) != len(names):
            self.semantic(span, f"subsystem repeated in {'+'.join(names)}")
        return tuple(names), span

    def in_world(self, names: tuple[str, ...], span: SourceSpan, spans: dict | None = None) -> None:
        for n in names:
            if n not in self.systems:
                self.semantic((spans or {}).get(n, span), f"undeclared subsystem {n!r}")
                return
        if self.world is None:
            return
        missing = [n for n in names if n not in self.world]
        if missing:
            self.semantic(span, f"{'+'.join(missing)} is not part of the isolated system yet")

    def step_started(self, span: SourceSpan) -> None:
        if self.first_step is None:
            self.first_step = span

    # -- statements
    def statement(self):
        tok = self.peek()
        if tok.kind != "ident":
            self.fail(tok, f"expected a statement keyword, found {tok.describe()}")
        handler = getattr(self, f"st_{tok.text}", None)
        if handler is None:
            self.fail(tok, "expected a statement keyword (system, state, isolated, seed, measure, "
                           f"apply, query, expect), found {tok.describe()}")
        before = len(self.diags)
        stmt = handler()
        self.punct(";", "to end the statement")
        return stmt if len(self.diags) == before else None

    def st_system(self):
        kw = self.advance()
        name = self.ident("subsystem name")
        self.punct(":", "between name and dimension")
        dim = self.integer("dimension")
        if name.text in self.systems:
            self.semantic(name.span, f"subsystem {name.text!r} declared twice")
        if dim.value < 2:
            self.semantic(dim.span, f"dimension mismatch: subsystem dimension must be >= 2, got {dim.value}")
        else:
            self.systems.setdefault(name.text, dim.value)
        return SystemDecl(name.text, dim.value, kw.span)

    def coefficient(self) -> complex:
        sign = 1.0
        if self.is_punct("-") or self.is_punct("+"):
            sign = -1.0 if self.advance().text == "-" else 1.0
        tok = self.peek()
        if tok.kind in ("int", "float"):
            self.advance()
            return sign * complex(tok.value)
        if tok.kind == "imag":
            self.advance()
            return sign * tok.value
        if tok.kind == "ident" and tok.text == "i":
            self.advance()
            return sign * 1j
        if self.is_punct("("):
            self.advance()
            value = self.coefficient()
            if self.is_punct("+") or self.is_punct("-"):
                op = self.advance().text
                im = self.peek()
                if im.kind == "imag":
                    self.advance()
                    part = im.value
                elif im.kind == "ident" and im.text == "i":
                    self.advance()
                    part = 1j
                else:
                    self.fail(im, f"expected imaginary literal such as 0.5i, found {im.describe()}")
                value = value + part if op == "+" else value - part
            self.punct(")", "to close the complex literal")
            return sign * value
        self.fail(tok, f"expected coefficient or ket, found {tok.describe()}")

    def term(self, sign: float) -> tuple[Term, list[tuple[int, SourceSpan]], SourceSpan]:
        coeff = complex(sign)
        if not self.is_punct("|"):
            coeff *= self.coefficient()
            if self.is_punct("*"):
                self.advance()
        self.punct("|", "to open a ket")
        indices = []
        while True:
            tok = self.peek()
            if tok.kind == "int":
                indices.append((tok.value, tok.span))
            elif tok.kind == "ident" and tok.text in INDEX_ALIASES:
                indices.append((INDEX_ALIASES[tok.text], tok.span))
            else:
                self.fail(tok, f"expected basis index (integer, up or down), found {tok.describe()}")
            self.advance()
            if not self.is_punct(","):
                break
            self.advance()
        self.punct(">", "to close the ket")
        at = self.punct("@", "before the subsystem list")
        if self.is_punct("("):
            self.advance()
            names = [self.ident("subsystem name")]
            while self.is_punct(","):
                self.advance()
                names.append(self.ident("subsystem name"))
            close = self.punct(")", "to close the subsystem list")
        else:
            names = [self.ident("subsystem name")]
            close = names[-1]
        span = _join(at.span, close.span)
        self.name_spans = {t.text: t.span for t in reversed(names)}
        return Term(coeff, tuple(i for i, _ in indices), tuple(t.text for t in names)), indices, span

    def st_state(self):
        kw = self.advance()
        name = self.ident("state name")
        self.punct("=", "after the state name")
        sign = 1.0
        if self.is_punct("-") or self.is_punct("+"):
            sign = -1.0 if self.advance().text == "-" else 1.0
        parsed = [self.term(sign) + (self.name_spans,)]
        while self.is_punct("+") or self.is_punct("-"):
            sign = -1.0 if self.advance().text == "-" else 1.0
            parsed.append(self.term(sign) + (self.name_spans,))
        normalize = False
        if self.is_word("normalize"):
            self.advance()
            normalize = True
        before = len(self.diags)
        systems = parsed[0][0].systems
        for t, idx, span, spans in parsed:
            undeclared = [s for s in t.systems if s not in self.systems]
            if undeclared:
                self.semantic(spans[undeclared[0]], f"undeclared subsystem {undeclared[0]!r}")
                continue
            if len(set(t.systems)) != len(t.systems):
                self.semantic(span, "subsystem repeated in ket")
                continue
            if sorted(t.systems) != sorted(systems):
                self.semantic(span, f"term is over ({','.join(t.systems)}) but the state is over "
                                    f"({','.join(systems)})")
                continue
            if len(idx) != len(t.systems):
                self.semantic(span, f"dimension mismatch: {len(idx)} indices for {len(t.systems)} subsystems")
                continue
            for (i, ispan), sys in zip(idx, t.systems):
                if i >= self.systems[sys]:
                    self.semantic(ispan, f"dimension mismatch: index {i} out of range for {sys} "
                                         f"(dimension {self.systems[sys]})")
        if name.text in self.states:
            self.semantic(name.span, f"state {name.text!r} defined twice")
        if len(self.diags) == before:
            dims = [self.systems[s] for s in systems]
            vec = np.zeros(int(np.prod(dims)), dtype=complex)
            for t, _, _, _ in parsed:
                order = [t.systems.index(s) for s in systems]
                vec[np.ravel_multi_index(tuple(t.indices[o] for o in order), dims)] += t.coeff
            norm = float(np.linalg.norm(vec))
            if norm < 1e-12:
                self.semantic(name.span, f"state {name.text!r} is the zero vector")
            elif abs(norm - 1.0) > NORM_SLACK and not normalize:
                self.semantic(name.span, f"state {name.text!r} has norm {norm:.9g}; within {NORM_SLACK:g} "
                                         "of 1 is required unless 'normalize' is given")
            else:
                self.states[name.text] = (systems, vec / norm)
        return StateDef(name.text, tuple(t for t, _, _, _ in parsed), normalize, kw.span)

    def st_isolated(self):
        kw = self.advance()
        name = self.ident("state name")
        if self.isolated_seen:
            self.semantic(kw.span, "only one isolated root state is allowed")
        elif name.text not in self.states:
            self.semantic(name.span, f"undeclared state {name.text!r}")
        else:
            self.isolated_seen = True
            self.world = list(self.states[name.text][0])
        return IsolatedDecl(name.text, kw.span)

    def st_seed(self):
        kw = self.advance()
        value = self.integer("seed")
        return SeedDecl(value.value, kw.span)

    def require_world(self, span: SourceSpan) -> None:
        self.step_started(span)
        if self.world is None:
            self.semantic(span, "no isolated state declared before this statement")

    def st_measure(self):
        kw = self.advance()
        target, tspan = self.subset("measured subsystems")
        self.word("in")
        btok = self.ident("basis: computational, basis(...) or spin(...)")
        states: tuple[str, ...] = ()
        angle = None
        state_toks = []
        if btok.text == "computational":
            kind = "computational"
        elif btok.text == "basis":
            kind = "states"
            self.punct("(", "after 'basis'")
            state_toks.append(self.ident("state name"))
            while self.is_punct(","):
                self.advance()
                state_toks.append(self.ident("state name"))
            self.punct(")", "to close the basis list")
            states = tuple(t.text for t in state_toks)
        elif btok.text == "spin":
            kind = "spin"
            self.punct("(", "after 'spin'")
            angle, _ = self.number("tilt angle in degrees")
            self.punct(")", "to close 'spin'")
        else:
            self.fail(btok, f"expected basis: computational, basis(...) or spin(...), found {btok.describe()}")
        self.word("into")
        dev = self.ident("device name")
        pointers = None
        ptoks = []
        if self.is_word("pointers"):
            self.advance()
            self.punct("(", "after 'pointers'")
            ptoks.append(self.integer("pointer index"))
            while self.is_punct(","):
                self.advance()
                ptoks.append(self.integer("pointer index"))
            self.punct(")", "to close the pointer list")
            pointers = tuple(t.value for t in ptoks)
        self.require_world(kw.span)
        before = len(self.diags)
        self.in_world(target, tspan, self.name_spans)
        if dev.text not in self.systems:
            self.semantic(dev.span, f"undeclared subsystem {dev.text!r}")
        elif self.world is not None and dev.text in self.world:
            self.semantic(dev.span, f"device {dev.text!r} is already part of the isolated system")
        if len(self.diags) == before and self.world is not None:
            dims = {n: self.systems[n] for n in target}
            d = int(np.prod(list(dims.values())))
            ddim = self.systems[dev.text]
            if kind == "spin" and (len(target) != 1 or d != 2):
                self.semantic(tspan, "dimension mismatch: spin(...) needs a single two-dimensional subsystem")
            for t in state_toks:
                if t.text not in self.states:
                    self.semantic(t.span, f"undeclared state {t.text!r}")
                elif sorted(self.states[t.text][0]) != sorted(target):
                    self.semantic(t.span, f"state {t.text!r} is not over {'+'.join(target)}")
            if len(self.diags) == before and state_toks:
                canon = [n for n in self.world if n in target]
                vecs = []
                for t in state_toks:
                    sys, v = self.states[t.text]
                    v = v.reshape([self.systems[s] for s in sys]).transpose([sys.index(s) for s in canon])
                    vecs.append(v.reshape(-1))
                m = np.column_stack(vecs)
                if np.max(np.abs(m.conj().T @ m - np.eye(len(vecs)))) > ORTHO_TOL:
                    self.semantic(state_toks[0].span, "basis states are not orthonormal")
            if pointers is None:
                if ddim < d + 1:
                    self.semantic(dev.span, f"dimension mismatch: device {dev.text} has dimension {ddim}, "
                                            f"{d} outcomes need {d + 1} (or give pointers(...))")
            else:
                if len(pointers) != d:
                    self.semantic(ptoks[0].span, f"dimension mismatch: {len(pointers)} pointers for {d} outcomes")
                for t in ptoks:
                    if t.value >= ddim:
                        self.semantic(t.span, f"pointer {t.value} outside device dimension {ddim}")
                active = [p for p in pointers if p != 0]
                if len(set(active)) != len(active):
                    self.semantic(ptoks[0].span, "pointer states must be distinct")
        if len(self.diags) == before and self.world is not None:
            self.world.append(dev.text)
        return MeasureStep(target, kind, dev.text, states, angle, pointers, kw.span)

    def st_apply(self):
        kw = self.advance()
        gate = self.ident("gate name")
        self.punct("(", "after the gate name")
        sys = self.ident("subsystem name")
        self.punct(",", "between subsystem and angle")
        angle, _ = self.number("rotation angle in degrees")
        self.punct(")", "to close the gate")
        self.require_world(kw.span)
        if gate.text not in GATES:
            self.semantic(gate.span, f"unknown gate {gate.text!r}; expected one of {', '.join(GATES)}")
        self.in_world((sys.text,), sys.span)
        if sys.text in self.systems and self.systems[sys.text] != 2:
            self.semantic(sys.span, f"dimension mismatch: {gate.text} acts on a two-dimensional subsystem")
        return RotateStep(gate.text, sys.text, angle, kw.span)

    def query(self) -> Query:
        tok = self.ident("query name")
        kind = tok.text
        self.punct("(", f"after '{kind}'")
        subsets, indices, angles, recorders = [], [], [], False
        if kind in ("reduce", "possible_states", "purity", "sample"):
            sub, span = self.subset("subsystems")
            self.in_world(sub, span, self.name_spans)
            subsets.append(sub)
        elif kind == "joint":
            while True:
                self.punct("(", "to open a (subsystems, index) pair")
                sub, span = self.subset("subsystems")
                self.in_world(sub, span, self.name_spans)
                shared = [n for n in sub if any(n in prev for prev in subsets)]
                if shared:
                    self.semantic(self.name_spans[shared[0]],
                                  f"joint subsets must be disjoint; {shared[0]} appears twice")
                self.punct(",", "between subsystems and index")
                indices.append(self.integer("possible-state index").value)
                self.punct(")", "to close the pair")
                subsets.append(sub)
                if not self.is_punct(","):
                    break
                self.advance()
        elif kind == "nested":
            for what in ("outer subsystems", "inner subsystems"):
                sub, span = self.subset(what)
                self.in_world(sub, span, self.name_spans)
                self.punct(",", "after the subsystems")
                indices.append(self.integer("possible-state index").value)
                subsets.append(sub)
                if what == "outer subsystems":
                    self.punct(",", "between the two pairs")
        elif kind in ("bell", "bell_scan"):
            for _ in range(2):
                name = self.ident("spin subsystem")
                self.in_world((name.text,), name.span)
                if name.text in self.systems and self.systems[name.text] != 2:
                    self.semantic(name.span, f"dimension mismatch: {name.text} must be two-dimensional")
                subsets.append((name.text,))
                self.punct(",", "after the subsystem")
            n_angles = 2 if kind == "bell" else 3
            for k in range(n_angles):
                angles.append(self.number("angle in degrees")[0])
                if k < n_angles - 1:
                    self.punct(",", "between angles")
            if self.is_punct(","):
                self.advance()
                self.word("recorders")
                recorders = True
        else:
            self.fail(tok, "expected query name (reduce, possible_states, joint, nested, purity, "
                           f"sample, bell, bell_scan), found {tok.describe()}")
        self.punct(")", f"to close '{kind}'")
        return Query(kind, tuple(subsets), tuple(indices), tuple(angles), recorders, tok.span)

    def st_query(self):
        kw = self.advance()
        self.require_world(kw.span)
        q = self.query()
        return QueryStmt(q, kw.span)

    def st_expect(self):
        kw = self.advance()
        self.require_world(kw.span)
        q = self.query()
        if not q.scalar:
            self.semantic(q.span, f"query '{q.kind}' does not produce a single number")
        self.punct("==", "between query and expected value")
        value, _ = self.number("expected value")
        tol = None
        if self.is_word("tol"):
            self.advance()
            tol, tspan = self.number("tolerance")
            if tol < 0:
                self.semantic(tspan, "tolerance must be non-negative")
        return ExpectStmt(q, value, tol, kw.span)

    def recover(self) -> None:
        while True:
            tok = self.advance()
            if tok.kind == "eof" or (tok.kind == "punct" and tok.text == ";"):
                return

    def document(self) -> list:
        out = []
        while self.peek().kind != "eof":
            try:
                stmt = self.statement()
                if stmt is not None:
                    out.append(stmt)
            except _Abort:
                self.recover()
        return out


def diagnose(source: str) -> tuple[ScriptDocument | None, list[Diagnostic]]:
    """Parse and validate; return the document (or ``None``) and all diagnostics."""
    tokens, diags = tokenize(source)
    # lexical errors are already reported; the parser sees them as bad tokens
    p = _Parser(tokens, [])
    statements = p.document()
    pdiags = [d for d in p.diags if not any(d.span == ld.span for ld in diags)]
    diags = sorted(diags + pdiags, key=lambda d: (d.span.line, d.span.column))
    if not diags and p.first_step is not None and not p.isolated_seen:
        diags.append(Diagnostic("error", "no isolated state declared", p.first_step))
    if diags:
        return None, diags
    return ScriptDocument(tuple(statements)), []


def parse(source: str, filename: str = "<script>") -> ScriptDocument:
    """Parse ``source``; raise :class:`ScriptError` with every diagnostic on failure."""
    doc, diags = diagnose(source)
    if doc is None:
        raise ScriptError(diags, filename)
    return doc


def parse_file(path) -> ScriptDocument:
    from pathlib import Path

    path = Path(path)
    return parse(path.read_text(encoding="utf-8"), str(path))
