"""Command-line front end: ``qrs run | demo | scan``.

Exit status: 0 when every assertion passes, 1 when one fails, 2 for usage,
parse or semantic errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
from pathlib import Path
from typing import Sequence

from . import scenarios
from .errors import QRSError
from .report import FORMATTERS, SCHEMA_VERSION, ScenarioReport, fmt_number, round_sig
from .script import ScriptError, ScriptRuntimeError, execute, parse
from .tensor import TOL

DEFAULT_SEED = 0
SEED_ENV = "QRS_SEED"
DEMOS = ("threespin", "cat", "epr", "bell", "locality", "collapse")
SCAN_COLUMNS = ("alpha_deg", "beta_deg", "gamma_deg", "p_ab", "p_ag", "p_gb", "margin", "violated")
DEFAULT_GRID = "0:180:5"
INV_SQRT2 = 1 / math.sqrt(2)


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None


def _tighten(report: ScenarioReport, tol: float | None) -> None:
    if tol is None:
        return
    if not 0 <= tol <= TOL:
        raise UsageError(f"--tol may only tighten the default tolerance {TOL:g}; got {tol:g}")
    for a in report.assertions:
        a.tolerance = min(a.tolerance, tol)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None


def _complexes(text: str) -> list[complex]:
    try:
        return [complex(x.strip().replace("i", "j")) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--amplitudes: expected comma-separated complex numbers, got {text!r}") from None


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop included) or a single value, in degrees."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"malformed grid {text!r}; expected start:stop:step or a number") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3:
        raise UsageError(f"malformed grid {text!r}; expected start:stop:step")
    start, stop, step = nums
    if step <= 0 or stop < start or not all(math.isfinite(x) for x in nums):
        raise UsageError(f"malformed grid {text!r}; need step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(count)]


# -- demos


def _demo(name: str, args, seed: int) -> ScenarioReport:
    amps = _complexes(args.amplitudes) if args.amplitudes else None
    angles = _floats(args.angles, "--angles") if args.angles else None
    if name == "threespin":
        p = amps or [INV_SQRT2] * 4
        if len(p) != 4:
            raise UsageError("threespin takes four amplitudes: alpha,beta,gamma,delta")
        return scenarios.run_three_spin(*p)
    if name == "cat":
        p = amps or [math.sqrt(0.3), math.sqrt(0.7)]
        if len(p) != 2:
            raise UsageError("cat takes two amplitudes: alpha,beta")
        return scenarios.run_cat(*p, include_observer=True)
    if name == "epr":
        p = amps or [0.6, 0.8]
        if len(p) not in (2, 3):
            raise UsageError("epr takes amplitudes a,b[,preparation success]")
        delta = math.radians(angles[0]) if angles else math.radians(60.0)
        prep = p[2].real if len(p) == 3 else 1.0
        return scenarios.run_epr(p[0], p[1], delta, prep)
    if name == "bell":
        p = amps or [INV_SQRT2, INV_SQRT2]
        if len(p) != 2:
            raise UsageError("bell takes two amplitudes: a,b")
        angles = angles or [0.0, 90.0, 45.0]
        rad = [math.radians(x) for x in angles]
        if len(rad) == 2:
            return scenarios.run_bell_report(p[0], p[1], *rad, with_recorders=args.recorders)
        if len(rad) == 3:
            return scenarios.run_bell_triple(p[0], p[1], tuple(rad), with_recorders=args.recorders)
        raise UsageError("--angles takes two (one reading pair) or three (an inequality triple) values")
    if name == "locality":
        return scenarios.locality_check((2, 2, 2), args.trials or 100, seed)
    if name == "collapse":
        return scenarios.collapse_correspondence((2, 2), args.trials or 100, seed)
    raise UsageError(f"unknown demo {name!r}; choose one of: {', '.join(DEMOS)}")


# -- scan output


def _scan_rows(args) -> tuple[list, dict]:
    grids = {ax: parse_grid(getattr(args, ax) or DEFAULT_GRID) for ax in ("alpha", "beta", "gamma")}
    amps = _complexes(args.amplitudes) if args.amplitudes else [INV_SQRT2, INV_SQRT2]
    if len(amps) != 2:
        raise UsageError("scan takes two amplitudes: a,b")
    triples_deg = list(itertools.product(grids["alpha"], grids["beta"], grids["gamma"]))
    triples = [tuple(math.radians(x) for x in t) for t in triples_deg]
    rows = scenarios.bell_scan_rows(amps[0], amps[1], triples, args.recorders, max(1, args.parallel))
    config = {
        "a": [round_sig(amps[0].real), round_sig(amps[0].imag)],
        "b": [round_sig(amps[1].real), round_sig(amps[1].imag)],
        "recorders": bool(args.recorders),
        "grid": {ax: getattr(args, ax) or DEFAULT_GRID for ax in ("alpha", "beta", "gamma")},
    }
    return list(zip(triples_deg, rows)), config


def _row_values(deg, r) -> list[str]:
    # values below 1e-15 are rounding residue of exact zeros
    clip = lambda p: fmt_number(0.0 if p < 1e-15 else min(p, 1.0))  # noqa: E731
    return [fmt_number(deg[0]), fmt_number(deg[1]), fmt_number(deg[2]),
            clip(r.p_ab), clip(r.p_ag), clip(r.p_gb), fmt_number(r.margin),
            "true" if r.violated else "false"]


def format_scan(rows, config, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCAN_COLUMNS)
        for deg, r in rows:
            w.writerow(_row_values(deg, r))
        return buf.getvalue()
    if fmt == "json":
        out = []
        for deg, r in rows:
            vals = _row_values(deg, r)
            out.append({c: (v == "true" if c == "violated" else float(v)) for c, v in zip(SCAN_COLUMNS, vals)})
        doc = {"schema_version": SCHEMA_VERSION, "scan": config, "violations": sum(r.violated for _, r in rows),
               "rows": out}
        return json.dumps(doc, indent=2) + "\n"
    lines = ["  ".join(c.rjust(12) for c in SCAN_COLUMNS)]
    for deg, r in rows:
        lines.append("  ".join(v.rjust(12) for v in _row_values(deg, r)))
    lines.append(f"violations: {sum(r.violated for _, r in rows)} of {len(rows)}")
    return "\n".join(lines) + "\n"


# -- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv", "text"), default="text")
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default: ${SEED_ENV} or {DEFAULT_SEED})")
    common.add_argument("--out", default=None, help="write the report here instead of stdout")
    common.add_argument("--tol", type=float, default=None,
                        help=f"tighten every assertion tolerance to at most this (<= {TOL:g})")

    p = argparse.ArgumentParser(prog="qrs", description="Relative-state quantum calculus toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="execute a .qrs script")
    run.add_argument("script")

    demo = sub.add_parser("demo", parents=[common], help="run a built-in scenario")
    demo.add_argument("name", help=", ".join(DEMOS))
    demo.add_argument("--angles", help="degrees, comma separated")
    demo.add_argument("--amplitudes", help="comma-separated complex amplitudes, e.g. 0.6,0.8i")
    demo.add_argument("--recorders", action="store_true")
    demo.add_argument("--trials", type=int, default=None)
    demo.add_argument("--parallel", type=int, default=1)

    scan = sub.add_parser("scan", parents=[common], help="Bell inequality over an angle grid")
    for ax in ("alpha", "beta", "gamma"):
        scan.add_argument(f"--{ax}", default=None, help=f"start:stop:step in degrees (default {DEFAULT_GRID})")
    scan.add_argument("--amplitudes", help="a,b of the pair a|ud> - b|du> (default singlet)")
    scan.add_argument("--recorders", action="store_true")
    scan.add_argument("--parallel", type=int, default=1)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        if args.command == "scan":
            if args.tol is not None:
                _tighten(ScenarioReport("scan"), args.tol)
            rows, config = _scan_rows(args)
            _emit(format_scan(rows, config, args.format), args.out)
            return 0
        if args.command == "run":
            path = Path(args.script)
            try:
                source = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise UsageError(f"{path}: cannot read script ({exc.strerror or exc})") from None
            doc = parse(source, str(path))
            seed = args.seed
            if seed is None and doc.seed is None:
                seed = _seed(args)
            report = execute(doc, str(path), seed)
        else:
            if args.name not in DEMOS:
                raise UsageError(f"unknown demo {args.name!r}; choose one of: {', '.join(DEMOS)}")
            report = _demo(args.name, args, _seed(args))
        _tighten(report, args.tol)
        _emit(FORMATTERS[args.format](report), args.out)
        return 0 if report.passed else 1
    except ScriptError as exc:
        for d in exc.diagnostics:
            print(d.format(exc.filename), file=sys.stderr)
        return 2
    except ScriptRuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (UsageError, QRSError) as exc:
        print(f"qrs: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
