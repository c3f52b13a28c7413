"""The ``.qrs`` scenario description format."""

from .document import (
    Diagnostic,
    ExpectStmt,
    IsolatedDecl,
    MeasureStep,
    Query,
    QueryStmt,
    RotateStep,
    ScriptDocument,
    ScriptError,
    ScriptRuntimeError,
    SeedDecl,
    SourceSpan,
    StateDef,
    SystemDecl,
    Term,
)
from .execute import execute
from .parser import diagnose, parse, parse_file, tokenize
from .serialize import format_query, serialize

__all__ = [
    "Diagnostic",
    "ExpectStmt",
    "IsolatedDecl",
    "MeasureStep",
    "Query",
    "QueryStmt",
    "RotateStep",
    "ScriptDocument",
    "ScriptError",
    "ScriptRuntimeError",
    "SeedDecl",
    "SourceSpan",
    "StateDef",
    "SystemDecl",
    "Term",
    "diagnose",
    "execute",
    "format_query",
    "parse",
    "parse_file",
    "serialize",
    "tokenize",
]
