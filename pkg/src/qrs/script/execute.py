"""Run a validated script against the calculus and collect a report."""

from __future__ import annotations

import math

import numpy as np

from ..calculus import (
    JointQuery,
    ReferenceSystem,
    joint_probability,
    joint_probability_nested,
    possible_internal_states,
    sample_internal_state,
    state_with_respect_to,
)
from ..dynamics import MeasurementModel, SPIN_X, SPIN_Y, SPIN_Z, complete_basis, measure, spin_eigenstates
from ..errors import QRSError
from ..report import ScenarioReport
from ..scenarios import VIOLATION_TOL, bell_readings
from ..tensor import TOL, CompositeSpace, OperatorOnSubset, PureState, SubsystemLabel, apply_unitary
from .document import (
    ExpectStmt,
    IsolatedDecl,
    MeasureStep,
    Query,
    QueryStmt,
    RotateStep,
    ScriptDocument,
    ScriptRuntimeError,
    StateDef,
)
from .serialize import format_query

DEFAULT_SEED = 0
_GENERATORS = {"rx": SPIN_X, "ry": SPIN_Y, "rz": SPIN_Z}


def _state_vector(st: StateDef, dims: dict[str, int]) -> tuple[CompositeSpace, np.ndarray]:
    systems = st.systems
    space = CompositeSpace.of(*[(s, dims[s]) for s in systems])
    vec = np.zeros(space.total_dim, dtype=complex)
    for t in st.terms:
        order = [t.systems.index(s) for s in systems]
        vec[np.ravel_multi_index(tuple(t.indices[o] for o in order), space.dims)] += t.coeff
    return space, vec / np.linalg.norm(vec)


def _rotation(gate: str, degrees: float) -> np.ndarray:
    """``exp(-i theta S)`` for the spin component named by ``gate``."""
    theta = math.radians(degrees)
    gen = 2 * _GENERATORS[gate]
    return math.cos(theta / 2) * np.eye(2) - 1j * math.sin(theta / 2) * gen


class _Runner:
    def __init__(self, doc: ScriptDocument, filename: str, seed: int):
        self.doc = doc
        self.filename = filename
        self.seed = seed
        self.dims = doc.systems
        self.states = doc.states
        self.world: ReferenceSystem | None = None
        name = filename.rsplit("/", 1)[-1]
        self.report = ScenarioReport(f"script:{name}")

    def where(self, span) -> str:
        return f"{self.filename}:{span.line}:{span.column}"

    def state_on(self, name: str, space: CompositeSpace) -> PureState:
        sp, vec = _state_vector(self.states[name], self.dims)
        return PureState(sp, vec).permuted(space.names)

    def run(self) -> ScenarioReport:
        for st in self.doc.statements:
            try:
                self.step(st)
            except QRSError as exc:
                if isinstance(exc, ScriptRuntimeError):
                    raise
                span = st.query.span if isinstance(st, (QueryStmt, ExpectStmt)) else st.span
                raise ScriptRuntimeError(f"{type(exc).__name__}: {exc}", span, self.filename) from exc
        if self.world is not None:
            self.report.systems = list(zip(self.world.subset.names, self.world.subset.dims))
        self.report.findings["seed"] = self.seed
        return self.report

    def step(self, st) -> None:
        if isinstance(st, IsolatedDecl):
            sp, vec = _state_vector(self.states[st.state], self.dims)
            self.world = ReferenceSystem(PureState(sp, vec), isolated=True)
        elif isinstance(st, MeasureStep):
            target = self.world.subset.sub(st.target)
            if st.basis == "computational":
                basis = tuple(PureState.basis(target, list(np.unravel_index(k, target.dims)))
                              for k in range(target.total_dim))
            elif st.basis == "spin":
                basis = spin_eigenstates(math.radians(st.angle), target.names[0])
            else:
                basis = complete_basis([self.state_on(n, target) for n in st.states], target)
            model = MeasurementModel(target, tuple(basis), SubsystemLabel(st.device, self.dims[st.device]),
                                     0, st.pointers)
            self.world = measure(self.world, model)
        elif isinstance(st, RotateStep):
            space = self.world.subset.sub(st.system)
            op = OperatorOnSubset(space, _rotation(st.gate, st.angle), unitary=True)
            self.world = self.world.evolved(apply_unitary(self.world.internal_state, op))
        elif isinstance(st, QueryStmt):
            self.query_table(st.query)
        elif isinstance(st, ExpectStmt):
            actual = self.scalar(st.query)
            tol = TOL if st.tol is None else st.tol
            self.report.check(f"line {st.span.line}: {format_query(st.query)}", st.value, actual, tol,
                              self.where(st.query.span))

    def scalar(self, q: Query) -> float:
        w = self.world
        if q.kind == "joint":
            return joint_probability(w, JointQuery(list(zip(q.subsets, q.indices))))
        if q.kind == "nested":
            return joint_probability_nested(w, q.subsets[0], q.indices[0], q.subsets[1], q.indices[1])
        if q.kind == "purity":
            return state_with_respect_to(w, q.subsets[0]).purity()
        if q.kind == "sample":
            return float(sample_internal_state(possible_internal_states(w, q.subsets[0]), self.seed))
        if q.kind == "bell":
            return self.bell(q).p_plus_plus
        if q.kind == "bell_scan":
            return self.bell_margin(q)[-1]
        raise ScriptRuntimeError(f"query '{q.kind}' does not produce a single number", q.span, self.filename)

    def bell(self, q: Query, t1: float | None = None, t2: float | None = None):
        t1 = q.angles[0] if t1 is None else t1
        t2 = q.angles[1] if t2 is None else t2
        return bell_readings(self.world, q.subsets[0][0], q.subsets[1][0],
                             math.radians(t1), math.radians(t2), q.recorders)

    def bell_margin(self, q: Query) -> tuple[float, float, float, float]:
        al, be, ga = q.angles
        p_ab = self.bell(q, al, be).p_plus_plus
        p_ag = self.bell(q, al, ga).p_plus_plus
        p_gb = self.bell(q, ga, be).p_plus_plus
        return p_ab, p_ag, p_gb, p_ab - p_ag - p_gb

    def query_table(self, q: Query) -> None:
        where = self.where(q.span)
        text = format_query(q)
        w = self.world
        if q.kind == "reduce":
            rho = state_with_respect_to(w, q.subsets[0]).matrix
            t = self.report.table(text, where, ("span", "row") + tuple(f"c{k}" for k in range(rho.shape[1])))
            for i, row in enumerate(rho):
                t.add(where, i, *[complex(x) if abs(x.imag) > 1e-15 else float(x.real) for x in row])
        elif q.kind == "possible_states":
            pis = possible_internal_states(w, q.subsets[0])
            t = self.report.table(text, where, ("span", "index", "probability", "state"))
            for j, (p, s) in enumerate(pis):
                t.add(where, j, p, s)
        elif q.kind == "sample":
            pis = possible_internal_states(w, q.subsets[0])
            j = sample_internal_state(pis, self.seed)
            t = self.report.table(text, where, ("span", "index", "probability", "state"))
            t.add(where, j, pis[j].probability, pis[j].state)
        elif q.kind == "bell":
            row = self.bell(q)
            t = self.report.table(text, where, ("span", "first", "second", "probability"))
            for j, sj in enumerate("+-"):
                for k, sk in enumerate("+-"):
                    t.add(where, sj, sk, row.table[j, k])
        elif q.kind == "bell_scan":
            p_ab, p_ag, p_gb, margin = self.bell_margin(q)
            t = self.report.table(text, where, ("span", "alpha_deg", "beta_deg", "gamma_deg",
                                                "p_ab", "p_ag", "p_gb", "margin", "violated"))
            t.add(where, *q.angles, p_ab, p_ag, p_gb, margin, margin > VIOLATION_TOL)
        else:
            t = self.report.table(text, where, ("span", "value"))
            t.add(where, self.scalar(q))


def execute(doc: ScriptDocument, filename: str = "<script>", seed: int | None = None) -> ScenarioReport:
    """Run ``doc``. ``seed`` overrides the script's own ``seed`` statement."""
    if seed is None:
        seed = doc.seed if doc.seed is not None else DEFAULT_SEED
    return _Runner(doc, filename, int(seed)).run()
