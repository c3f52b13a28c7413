"""Validated, immutable representation of a ``.qrs`` script.

Source spans are carried along for diagnostics but excluded from equality, so
two documents compare equal when they say the same thing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from ..errors import QRSError


@dataclass(frozen=True)
class SourceSpan:
    """1-based line and column; ``length`` characters on that line."""

    line: int
    column: int
    length: int = 1

    def __str__(self):
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    message: str
    span: SourceSpan

    def format(self, filename: str = "<script>") -> str:
        return f"{filename}:{self.span.line}:{self.span.column}: {self.severity}: {self.message}"


class ScriptError(QRSError):
    """Parsing or validation failed; ``diagnostics`` lists every problem found."""

    def __init__(self, diagnostics: list[Diagnostic], filename: str = "<script>"):
        self.diagnostics = list(diagnostics)
        self.filename = filename
        super().__init__("\n".join(d.format(filename) for d in self.diagnostics))


class ScriptRuntimeError(QRSError):
    """A valid script failed while executing; ``span`` points at the statement."""

    def __init__(self, message: str, span: SourceSpan, filename: str = "<script>"):
        self.diagnostic = Diagnostic("error", message, span)
        self.span = span
        self.filename = filename
        super().__init__(self.diagnostic.format(filename))


def _span():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SystemDecl:
    name: str
    dim: int
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Term:
    """``coeff |indices> @ systems``."""

    coeff: complex
    indices: tuple[int, ...]
    systems: tuple[str, ...]


@dataclass(frozen=True)
class StateDef:
    name: str
    terms: tuple[Term, ...]
    normalize: bool = False
    span: Optional[SourceSpan] = _span()

    @property
    def systems(self) -> tuple[str, ...]:
        return self.terms[0].systems


@dataclass(frozen=True)
class IsolatedDecl:
    state: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class SeedDecl:
    value: int
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class MeasureStep:
    """Read ``target`` into ``device``.

    ``basis`` is ``"computational"``, ``"states"`` (named states, completed to
    a basis) or ``"spin"`` (a spin-1/2 eigenbasis tilted by ``angle`` degrees).
    """

    target: tuple[str, ...]
    basis: str
    device: str
    states: tuple[str, ...] = ()
    angle: Optional[float] = None
    pointers: Optional[tuple[int, ...]] = None
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class RotateStep:
    gate: str
    system: str
    angle: float
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Query:
    """A query expression.

    ``subsets`` and ``indices`` are positional arguments whose meaning depends
    on ``kind``; ``angles`` are in degrees.
    """

    kind: str
    subsets: tuple[tuple[str, ...], ...] = ()
    indices: tuple[int, ...] = ()
    angles: tuple[float, ...] = ()
    recorders: bool = False
    span: Optional[SourceSpan] = _span()

    @property
    def scalar(self) -> bool:
        return self.kind in SCALAR_QUERIES


SCALAR_QUERIES = frozenset({"joint", "nested", "purity", "bell", "bell_scan", "sample"})
TABLE_QUERIES = frozenset({"reduce", "possible_states"})
GATES = ("rx", "ry", "rz")


@dataclass(frozen=True)
class QueryStmt:
    query: Query
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class ExpectStmt:
    query: Query
    value: float
    tol: Optional[float] = None
    span: Optional[SourceSpan] = _span()


Statement = Union[SystemDecl, StateDef, IsolatedDecl, SeedDecl, MeasureStep, RotateStep, QueryStmt, ExpectStmt]


@dataclass(frozen=True)
class ScriptDocument:
    statements: tuple[Statement, ...]

    def _of(self, kind):
        return tuple(s for s in self.statements if isinstance(s, kind))

    @property
    def systems(self) -> dict[str, int]:
        return {s.name: s.dim for s in self._of(SystemDecl)}

    @property
    def states(self) -> dict[str, StateDef]:
        return {s.name: s for s in self._of(StateDef)}

    @property
    def root(self) -> Optional[str]:
        iso = self._of(IsolatedDecl)
        return iso[0].state if iso else None

    @property
    def seed(self) -> Optional[int]:
        seeds = self._of(SeedDecl)
        return seeds[-1].value if seeds else None
