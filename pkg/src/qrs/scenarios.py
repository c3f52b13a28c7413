"""Worked scenarios built on the calculus, each producing a :class:`ScenarioReport`."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .calculus import (
    DROP_THRESHOLD,
    PossibleInternalStates,
    ReferenceSystem,
    check_commutation,
    joint_distribution,
    joint_probability_nested,
    joint_probability_of,
    overlap_matrix,
    possible_internal_states,
    possible_states_deviation,
    relative_state,
    state_with_respect_to,
)
from .dynamics import (
    MeasurementModel,
    epr_euler_angles,
    epr_partner_state,
    epr_partner_vector,
    measure,
    spin_eigenstates,
    spin_vectors,
)
from .errors import DimensionError, NormalizationError
from .report import ScenarioReport
from .tensor import (
    EXACT_TOL,
    TOL,
    CompositeSpace,
    OperatorOnSubset,
    PureState,
    SubsystemLabel,
    apply_unitary,
    random_state,
    random_unitary,
)

VIOLATION_TOL = 1e-10


def _ket(space: CompositeSpace, *index: int) -> np.ndarray:
    v = np.zeros(space.total_dim, dtype=complex)
    v[np.ravel_multi_index(index, space.dims)] = 1.0
    return v


def _check_pair(name: str, x: complex, y: complex) -> None:
    total = abs(x) ** 2 + abs(y) ** 2
    if abs(total - 1.0) > TOL:
        raise NormalizationError(f"{name}: squared moduli sum to {total!r}, expected 1")


def _systems(space: CompositeSpace) -> list[tuple[str, int]]:
    return list(zip(space.names, space.dims))


def _pis_table(report: ScenarioReport, title: str, relation: str, pis: PossibleInternalStates):
    t = report.table(title, relation, ("index", "probability", "state"))
    for j, (p, s) in enumerate(pis):
        t.add(j, p, s)
    return t


def _check_candidates(
    report: ScenarioReport,
    ref: ReferenceSystem,
    pis: PossibleInternalStates,
    expected: Sequence[tuple[str, float, PureState]],
    title: str,
    relation: str,
    match_states: bool,
) -> None:
    """Verify hand-derived possible states against the engine's table.

    Every expected state must commute with the reduced state and carry the
    expected weight. With ``match_states`` the engine's own basis must also
    contain it (up to phase).
    """
    t = report.table(title, relation, ("label", "expected_probability", "state",
                                       "commutator_norm", "eigenvalue", "engine_match"))
    nonzero = [e for e in expected if e[1] >= DROP_THRESHOLD]
    report.check(f"{title}: count", len(nonzero), len(pis), 0, relation)
    for label, w, state in nonzero:
        chk = check_commutation(ref, pis.subset, state)
        idx, fid = pis.match(state)
        t.add(label, w, state, chk.commutator_norm, chk.eigenvalue, idx if fid > 1 - TOL else "")
        report.check(f"{title}: {label} commutes", 0.0, chk.commutator_norm, TOL, relation, "le")
        report.check(f"{title}: {label} probability", w, chk.eigenvalue, TOL, relation)
        if match_states:
            report.check(f"{title}: {label} in engine basis", 1.0, fid, TOL, relation, "ge")


# ---------------------------------------------------------------- three spins


def run_three_spin(alpha: complex, beta: complex, gamma: complex, delta: complex) -> ScenarioReport:
    """Three spin-1/2 particles A, B, C; A+B is then read by a device M.

    A and B use the z basis (index 0 is up). C is written in the eigenbasis of
    its x spin (index 0 is the +1/2 state). The pair A+B holds
    ``beta|ud> + conj(gamma)|du>`` alongside C's + state and
    ``gamma|ud> - conj(beta)|du>`` alongside C's - state, with weights
    ``alpha`` and ``delta``.
    """
    _check_pair("alpha, delta", alpha, delta)
    _check_pair("beta, gamma", beta, gamma)
    space = CompositeSpace.of(("A", 2), ("B", 2), ("C", 2))
    ab, bc, c = space.sub("A+B"), space.sub("B+C"), space.sub("C")
    ud, du = _ket(ab, 0, 1), _ket(ab, 1, 0)
    cp, cm = _ket(c, 0), _ket(c, 1)
    psi_p = beta * ud + np.conj(gamma) * du
    psi_m = gamma * ud - np.conj(beta) * du
    ref = ReferenceSystem(
        PureState(space, alpha * np.kron(psi_p, cp) + delta * np.kron(psi_m, cm)), isolated=True
    )
    report = ScenarioReport("three-spin", _systems(space))

    r1 = possible_internal_states(ref, ab)
    r2 = possible_internal_states(ref, bc)
    _pis_table(report, "A+B possible states", "A+B relative to A+B+C, before measurement", r1)
    _pis_table(report, "B+C possible states", "B+C relative to A+B+C, before measurement", r2)
    _check_candidates(
        report, ref, r1,
        [("psi+", abs(alpha) ** 2, PureState(ab, psi_p)),
         ("psi-", abs(delta) ** 2, PureState(ab, psi_m))],
        "A+B candidates", "A+B pair correlated with C's x spin", not r1.degenerate,
    )
    b_up, b_down = _ket(space.sub("B"), 0), _ket(space.sub("B"), 1)
    bels = [
        ("B down (x)", b_down, alpha * beta * cp + delta * gamma * cm),
        ("B up (x)", b_up, alpha * np.conj(gamma) * cp - delta * np.conj(beta) * cm),
    ]
    expected_r2 = []
    for label, bv, cv in bels:
        w = float(np.vdot(cv, cv).real)
        if w >= DROP_THRESHOLD:
            expected_r2.append((label, w, PureState.from_vector(bc, np.kron(bv, cv))))
    _check_candidates(report, ref, r2, expected_r2, "B+C candidates",
                      "B+C states correlated with A's z spin", not r2.degenerate)

    model = MeasurementModel.create(ab, [PureState(ab, psi_p), PureState(ab, psi_m)], "M")
    after = measure(ref, model)
    report.systems.append((model.device.name, model.device.dim))
    r1_after = possible_internal_states(after, ab)
    r2_after = possible_internal_states(after, bc)
    _pis_table(report, "A+B possible states after", "A+B relative to A+B+C+M, after M reads A+B", r1_after)
    _pis_table(report, "B+C possible states after", "B+C relative to A+B+C+M, after M reads A+B", r2_after)

    r1_dev = possible_states_deviation(r1, r1_after)
    report.check("A+B possible states unchanged", 0.0, r1_dev, TOL,
                 "reading A+B in its own possible-state basis", "le")
    products = []
    for (bi, bl), (ci, cl), w in (
        ((1, "down"), (0, "+"), abs(alpha * beta) ** 2),
        ((0, "up"), (0, "+"), abs(alpha * gamma) ** 2),
        ((1, "down"), (1, "-"), abs(delta * gamma) ** 2),
        ((0, "up"), (1, "-"), abs(delta * beta) ** 2),
    ):
        products.append((f"B {bl}, C {cl}", w, PureState(bc, _ket(bc, bi, ci))))
    _check_candidates(report, after, r2_after, products, "B+C candidates after",
                      "B+C product states once M holds the A+B record", True)

    ov = overlap_matrix(r2, r2_after)
    t = report.table("B+C overlap before/after", "|<before_i|after_j>| for B+C",
                     ("before_index",) + tuple(f"after_{j}" for j in range(len(r2_after))))
    for i, row in enumerate(ov):
        t.add(i, *row)
    r2_dev = possible_states_deviation(r2, r2_after)
    should_change = abs(alpha * beta * gamma * delta) > 1e-6
    if should_change:
        report.check("B+C possible states changed", 1e-3, r2_dev, 0.0,
                     "B+C basis moves to products once A+B is recorded", "ge")
    report.findings.update(
        a_b_count=len(r1), b_c_count=len(r2), b_c_count_after=len(r2_after),
        a_b_deviation=r1_dev, b_c_deviation=r2_dev, b_c_changed=r2_dev > 1e-6,
        device_dim=model.device.dim,
    )
    return report


# ----------------------------------------------------------------------- cat


CAT_SYSTEMS = ("nucleus", "detector", "cat", "observer")


def run_cat(alpha: complex, beta: complex, include_observer: bool = False) -> ScenarioReport:
    """Nucleus, detector, cat (and optionally an observer) in a two-branch state.

    Index 0 of every subsystem belongs to the decay branch (decayed nucleus,
    fired detector, dead cat, observer who saw a dead cat).
    """
    _check_pair("alpha, beta", alpha, beta)
    names = CAT_SYSTEMS if include_observer else CAT_SYSTEMS[:3]
    space = CompositeSpace.of(*[(n, 2) for n in names])
    n = len(names)
    ref = ReferenceSystem(
        PureState(space, alpha * _ket(space, *[0] * n) + beta * _ket(space, *[1] * n)),
        isolated=True,
    )
    report = ScenarioReport("cat", _systems(space))
    pa, pb = abs(alpha) ** 2, abs(beta) ** 2
    cat = space.sub("cat")

    rho = state_with_respect_to(ref, "cat").matrix
    t = report.table("cat state", "cat relative to the whole isolated system", ("row", "col_0", "col_1"))
    for i, row in enumerate(rho):
        t.add(i, row[0].real, row[1].real)
    report.check("cat state is diagonal mixture", 0.0,
                 float(np.max(np.abs(rho - np.diag([pa, pb])))), EXACT_TOL,
                 "cat state diag(|alpha|^2, |beta|^2)", "le")
    pis = possible_internal_states(ref, cat)
    _pis_table(report, "cat possible states", "cat relative to the whole isolated system", pis)
    _check_candidates(report, ref, pis,
                      [("dead", pa, PureState(cat, _ket(cat, 0))),
                       ("alive", pb, PureState(cat, _ket(cat, 1)))],
                      "cat candidates", "dead/alive branches", not pis.degenerate)

    if include_observer:
        obs = space.sub("observer")
        jt = report.table("cat/observer joint", "joint probability for disjoint cat and observer",
                          ("cat", "observer", "probability"))
        labels = (("dead", "saw dead"), ("alive", "saw alive"))
        for x in (0, 1):
            for y in (0, 1):
                p = joint_probability_of(
                    ref, [(cat, PureState(cat, _ket(cat, x))), (obs, PureState(obs, _ket(obs, y)))]
                )
                jt.add(labels[x][0], labels[y][1], p)
                expected = (pa, pb)[x] if x == y else 0.0
                report.check(f"P(cat {labels[x][0]}, observer {labels[y][1]})", expected, p,
                             EXACT_TOL, "observer perfectly correlated with the cat")
        both = space.sub("cat+observer")
        outer = possible_internal_states(ref, both)
        inner = possible_internal_states(ref, obs)
        nt = report.table("cat+observer / observer nested",
                          "joint probability for a system and its subsystem",
                          ("outer_index", "outer_state", "inner_index", "inner_state",
                           "joint", "conditional"))
        for j, (lam, phi) in enumerate(outer):
            y_outer = np.unravel_index(int(np.argmax(np.abs(phi.amplitudes))), both.dims)[1]
            for k, (_, chi) in enumerate(inner):
                y_inner = int(np.argmax(np.abs(chi.amplitudes)))
                p = joint_probability_nested(ref, both, j, obs, k)
                pc = joint_probability_nested(ref, both, j, obs, k, conditional=True)
                nt.add(j, phi, k, chi, p, pc)
                report.check(f"nested P(outer {j}, observer {k})",
                             lam if y_outer == y_inner else 0.0, p, TOL,
                             "observer state implied by the cat+observer state")
    report.findings.update(cat_possible_states=len(pis), degenerate=pis.degenerate)
    return report


# ----------------------------------------------------------------------- EPR


def run_epr(a: complex, b: complex, delta: float, prep_success_amplitude: float = 1.0) -> ScenarioReport:
    """Two spins prepared in ``a|ud> - b|du>``; P1 is read along a tilted axis.

    ``Mp`` records whether the preparation worked (index 0) or failed. On
    failure P1 is absent (its index 2) and P2 is left up; the device M then
    stays in its ready state, so the absent state is an unregistered outcome.
    """
    _check_pair("a, b", a, b)
    ap = float(prep_success_amplitude)
    if not 0.0 <= ap <= 1.0:
        raise NormalizationError(f"preparation amplitude {ap!r} outside [0, 1]")
    space = CompositeSpace.of(("Mp", 2), ("P1", 3), ("P2", 2))
    fail = math.sqrt(max(1.0 - ap * ap, 0.0))
    vec = ap * (a * _ket(space, 0, 0, 1) - b * _ket(space, 0, 1, 0)) + fail * _ket(space, 1, 2, 0)
    ref = ReferenceSystem(PureState(space, vec), isolated=True)
    report = ScenarioReport("epr", _systems(space))

    p1, p12, p2 = space.sub("P1"), space.sub("P1+P2"), space.sub("P2")
    up, down = (np.append(v, 0.0) for v in spin_vectors(delta))
    basis = (PureState(p1, up), PureState(p1, down), PureState(p1, _ket(p1, 2)))
    model = MeasurementModel(p1, basis, SubsystemLabel("M", 3), 0, (1, 2, 0))
    after = measure(ref, model)
    report.systems.append(("M", 3))

    before2 = possible_internal_states(ref, "P2")
    after2 = possible_internal_states(after, "P2", align_to=before2)
    _pis_table(report, "P2 possible states before", "P2 relative to Mp+P1+P2", before2)
    _pis_table(report, "P2 possible states after", "P2 relative to Mp+P1+P2+M", after2)
    report.check("P2 possible states unchanged by reading P1", 0.0,
                 possible_states_deviation(before2, after2), TOL,
                 "no local effect on the distant particle", "le")

    record = possible_internal_states(after, "Mp+M")
    partners = [s for s in (relative_state(after, "Mp+M", r)[1] for r in record.states) if s is not None]
    pis12 = possible_internal_states(after, p12, align_to=partners)
    _pis_table(report, "P1+P2 possible states after", "P1+P2 relative to Mp+P1+P2+M", pis12)

    bt = report.table("partner branches", "P1 outcome along delta and the matching P2 state",
                      ("outcome", "probability", "P1+P2 state", "P2 state", "P2 purity",
                       "alpha", "beta", "gamma", "eigen_residual"))
    mp_ok = PureState(space.sub("Mp"), _ket(space.sub("Mp"), 0))
    for j, (outcome, v1) in enumerate((("+", up), ("-", down))):
        w = ap**2 * float(np.linalg.norm(epr_partner_vector(a, b, delta, outcome)) ** 2)
        if w < DROP_THRESHOLD:
            report.findings[f"branch_{outcome}"] = "zero weight, skipped"
            continue
        xi = epr_partner_state(a, b, delta, outcome)
        expected = PureState(p12, np.kron(v1, xi.amplitudes))
        idx, fid = pis12.match(expected)
        report.check(f"branch {outcome}: P1+P2 state", 1.0, fid, TOL,
                     "P1 eigenstate along delta times the partner state", "ge")
        report.check(f"branch {outcome}: probability", w, pis12[idx].probability, TOL,
                     "squared norm of the partner branch")
        pj = joint_probability_of(after, [("Mp", mp_ok), ("M", model.pointer_state(j)),
                                          (p12, pis12[idx].state)])
        report.check(f"branch {outcome}: joint with record", w, pj, TOL,
                     "device pointer correlated with the branch")
        rho2 = state_with_respect_to(ReferenceSystem(pis12[idx].state), p2)
        vals, vecs = np.linalg.eigh(rho2.matrix)
        top = PureState(p2, vecs[:, -1])
        report.check(f"branch {outcome}: P2 pure", 1.0, rho2.purity(), TOL,
                     "P2 relative to P1+P2 in that branch", "ge")
        report.check(f"branch {outcome}: P2 state", 1.0, top.fidelity(xi), TOL,
                     "P2 relative to P1+P2 equals the partner state", "ge")
        if abs(a) > 1e-15 and abs(b) > 1e-15:
            e = epr_euler_angles(a, b, delta, outcome)
            eig = -0.5 if outcome == "+" else 0.5
            res = float(np.linalg.norm(e.spin_operator() @ xi.amplitudes - eig * xi.amplitudes))
            report.check(f"branch {outcome}: spin eigenstate in rotated frame", 0.0, res, 1e-12,
                         "partner is an eigenstate of spin along the Euler axis", "le")
            bt.add(outcome, w, expected, xi, rho2.purity(), e.alpha, e.beta, e.gamma, res)
        else:
            bt.add(outcome, w, expected, xi, rho2.purity(), "", "", "", "")
    if fail > 0 and fail**2 >= DROP_THRESHOLD:
        expected = PureState(p12, _ket(p12, 2, 0))
        idx, fid = pis12.match(expected)
        report.check("failed preparation: P1+P2 state", 1.0, fid, TOL,
                     "absent P1 leaves the device ready", "ge")
        report.check("failed preparation: probability", fail**2, pis12[idx].probability, TOL,
                     "failure weight")
    report.findings.update(p1_p2_possible_states=len(pis12), degenerate=pis12.degenerate)
    return report


# ---------------------------------------------------------------------- Bell


@dataclass
class BellScanRow:
    """Joint outcome table of two spin readings at angles ``theta1``, ``theta2``.

    ``table[j, k]`` is the probability that M1 shows outcome ``j`` and M2
    outcome ``k`` (0 is +, 1 is -). ``decomposition[l1, l2, j, k]`` splits
    each cell over the recorder readings when requested.
    """

    theta1: float
    theta2: float
    with_recorders: bool
    table: np.ndarray
    marginal1: np.ndarray
    marginal2: np.ndarray
    decomposition: np.ndarray | None = None

    @property
    def correlated(self) -> bool:
        return bool(np.max(np.abs(self.table - np.outer(self.marginal1, self.marginal2))) > TOL)

    @property
    def p_plus_plus(self) -> float:
        return float(self.table[0, 0])


def _bell_state(a: complex, b: complex) -> ReferenceSystem:
    _check_pair("a, b", a, b)
    space = CompositeSpace.of(("P1", 2), ("P2", 2))
    return ReferenceSystem(PureState(space, a * _ket(space, 0, 1) - b * _ket(space, 1, 0)), True)


def _fresh_name(space: CompositeSpace, base: str) -> str:
    name, n = base, 0
    while name in space.names:
        n += 1
        name = f"{base}_{n}"
    return name


def bell_readings(
    ref: ReferenceSystem,
    first: str,
    second: str,
    theta1: float,
    theta2: float,
    with_recorders: bool = False,
    decompose: bool = False,
) -> BellScanRow:
    """Read spin ``first`` along ``theta1`` and ``second`` along ``theta2``.

    Works on any isolated reference holding the two spins. With recorders,
    each spin is first noted in the basis of its own possible states, which
    removes the coherence between the branches.
    """
    original = ref
    recorders = []
    if with_recorders:
        for particle, base in ((first, "R1"), (second, "R2")):
            pis = possible_internal_states(original, particle)
            name = _fresh_name(ref.subset, base)
            ref = measure(ref, MeasurementModel.create(original.subset.sub(particle), pis.states, name))
            recorders.append(name)
    devices = []
    for particle, base, theta in ((first, "M1", theta1), (second, "M2", theta2)):
        name = _fresh_name(ref.subset, base)
        m = MeasurementModel(ref.subset.sub(particle), spin_eigenstates(theta, particle),
                             SubsystemLabel(name, 3))
        ref = measure(ref, m)
        devices.append((name, [m.pointer_state(j) for j in range(2)]))
    (d1, p1), (d2, p2) = devices
    table = joint_distribution(ref, [(d1, p1), (d2, p2)])
    marg1 = joint_distribution(ref, [(d1, p1)], require_possible=False)
    marg2 = joint_distribution(ref, [(d2, p2)], require_possible=False)
    decomposition = None
    if decompose and recorders:
        recs = [
            (r, [PureState.basis(ref.subset.sub(r), [l + 1]) for l in range(ref.subset.label(r).dim - 1)])
            for r in recorders
        ]
        decomposition = joint_distribution(ref, recs + [(d1, p1), (d2, p2)])
    return BellScanRow(float(theta1), float(theta2), with_recorders, table, marg1, marg2, decomposition)


def run_bell(
    a: complex,
    b: complex,
    theta1: float,
    theta2: float,
    with_recorders: bool = False,
    decompose: bool = False,
) -> BellScanRow:
    """Spins P1, P2 in ``a|ud> - b|du>``; P1 read along ``theta1`` into M1 and
    P2 along ``theta2`` into M2, optionally after recorders R1, R2."""
    return bell_readings(_bell_state(a, b), "P1", "P2", theta1, theta2, with_recorders, decompose)


@dataclass
class BellInequalityRow:
    alpha: float
    beta: float
    gamma: float
    p_ab: float
    p_ag: float
    p_gb: float

    @property
    def margin(self) -> float:
        return self.p_ab - self.p_ag - self.p_gb

    @property
    def violated(self) -> bool:
        return self.margin > VIOLATION_TOL

    def as_degrees(self) -> tuple[float, float, float]:
        return tuple(math.degrees(x) for x in (self.alpha, self.beta, self.gamma))


def _pp_worker(args) -> tuple[tuple[float, float], float]:
    a, b, t1, t2, rec = args
    return (t1, t2), run_bell(a, b, t1, t2, rec).p_plus_plus


def bell_scan_rows(
    a: complex,
    b: complex,
    triples: Iterable[tuple[float, float, float]],
    with_recorders: bool = False,
    parallel: int = 1,
) -> list[BellInequalityRow]:
    """Evaluate ``P(a,b) - P(a,g) - P(g,b)`` for each angle triple (radians).

    ``P(x, y)`` is the probability that both readings are + at angles x and y.
    Each distinct angle pair is computed once. Output order follows the input
    and does not depend on ``parallel``.
    """
    triples = [tuple(float(x) for x in t) for t in triples]
    pairs = sorted({p for al, be, ga in triples for p in ((al, be), (al, ga), (ga, be))})
    jobs = [(a, b, t1, t2, with_recorders) for t1, t2 in pairs]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            cache = dict(ex.map(_pp_worker, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))
    else:
        cache = dict(map(_pp_worker, jobs))
    return [
        BellInequalityRow(al, be, ga, cache[(al, be)], cache[(al, ga)], cache[(ga, be)])
        for al, be, ga in triples
    ]


def bell_inequality_scan(
    a: complex,
    b: complex,
    triples: Iterable[tuple[float, float, float]],
    with_recorders: bool = False,
    parallel: int = 1,
) -> ScenarioReport:
    rows = bell_scan_rows(a, b, triples, with_recorders, parallel)
    report = ScenarioReport("bell-scan", [("P1", 2), ("P2", 2)])
    relation = ("both-plus probabilities with recorders" if with_recorders
                else "both-plus probabilities, coherent readings")
    t = report.table("inequality scan", relation,
                     ("alpha_deg", "beta_deg", "gamma_deg", "p_ab", "p_ag", "p_gb", "margin", "violated"))
    for r in rows:
        t.add(*r.as_degrees(), r.p_ab, r.p_ag, r.p_gb, r.margin, r.violated)
    report.findings.update(
        triples=len(rows),
        violations=sum(r.violated for r in rows),
        max_margin=max((r.margin for r in rows), default=0.0),
        with_recorders=with_recorders,
    )
    return report


def run_bell_report(
    a: complex, b: complex, theta1: float, theta2: float, with_recorders: bool = False
) -> ScenarioReport:
    """Outcome table for one angle pair, checked against closed forms.

    Both paths are evaluated so that the single-device marginals can be
    compared; the reported table is the one selected by ``with_recorders``.
    """
    coherent = run_bell(a, b, theta1, theta2, False)
    recorded = run_bell(a, b, theta1, theta2, True, decompose=True)
    row = recorded if with_recorders else coherent
    systems = [("P1", 2), ("P2", 2)]
    if with_recorders:
        systems += [("R1", 3), ("R2", 3)]
    report = ScenarioReport("bell", systems + [("M1", 3), ("M2", 3)])
    relation = "readings after recorders" if with_recorders else "coherent readings"
    t = report.table("outcome table", relation, ("M1", "M2", "probability"))
    for j, sj in enumerate("+-"):
        for k, sk in enumerate("+-"):
            t.add(sj, sk, row.table[j, k])
    mt = report.table("marginals", "single-device distributions, both paths",
                      ("device", "outcome", "coherent", "with_recorders"))
    for dev, c, r in (("M1", coherent.marginal1, recorded.marginal1),
                      ("M2", coherent.marginal2, recorded.marginal2)):
        for j, sj in enumerate("+-"):
            mt.add(dev, sj, c[j], r[j])
    report.check("table sums to one", 1.0, row.table.sum(), 1e-12, "normalization")
    for name, got, ref in (("M1 marginal", row.table.sum(axis=1), row.marginal1),
                           ("M2 marginal", row.table.sum(axis=0), row.marginal2)):
        report.check(f"{name} is the row/column sum", 0.0, float(np.max(np.abs(got - ref))), 1e-12,
                     "marginal consistency", "le")
    for name, c, r in (("M1", coherent.marginal1, recorded.marginal1),
                       ("M2", coherent.marginal2, recorded.marginal2)):
        report.check(f"{name} marginal unchanged by recorders", 0.0, float(np.max(np.abs(c - r))),
                     TOL, "recorders leave single-device statistics alone", "le")
    ex = bell_closed_form(a, b, theta1, theta2, with_recorders)
    report.check("table matches closed form", 0.0, float(np.max(np.abs(row.table - ex))), TOL,
                 "closed-form outcome probabilities", "le")
    report.check("recorder split sums to table", 0.0,
                 float(np.max(np.abs(recorded.decomposition.sum(axis=(0, 1)) - recorded.table))),
                 1e-12, "sum over recorder readings", "le")
    report.findings.update(
        theta1_deg=math.degrees(theta1), theta2_deg=math.degrees(theta2),
        p_plus_plus=row.p_plus_plus, correlated=row.correlated,
        path_difference=float(np.max(np.abs(coherent.table - recorded.table))),
    )
    return report


def run_bell_triple(
    a: complex, b: complex, triple: tuple[float, float, float], with_recorders: bool = False
) -> ScenarioReport:
    """The inequality at one angle triple, with the margin checked against closed forms."""
    report = bell_inequality_scan(a, b, [triple], with_recorders)
    row = report.get_table("inequality scan").rows[0]
    al, be, ga = triple
    closed = [bell_closed_form(a, b, x, y, with_recorders)[0, 0] for x, y in ((al, be), (al, ga), (ga, be))]
    for name, got, want in zip(("P(alpha+, beta+)", "P(alpha+, gamma+)", "P(gamma+, beta+)"), row[3:6], closed):
        report.check(name, want, got, TOL, "both-plus probability, closed form")
    margin = row[6]
    report.check("margin", closed[0] - closed[1] - closed[2], margin, TOL,
                 "P(alpha+,beta+) - P(alpha+,gamma+) - P(gamma+,beta+)")
    verdict = "VIOLATED" if row[7] else "SATISFIED"
    report.findings.update(margin=margin, verdict=verdict, summary=f"margin {margin:+.6f}, {verdict}")
    return report


def bell_closed_form(a: complex, b: complex, theta1: float, theta2: float, with_recorders: bool = False) -> np.ndarray:
    """Outcome table written out by hand, used as an independent cross-check.

    Coherent: ``|<xi_j(t1) xi_k(t2)| psi>|^2``. With recorders the cross terms
    between the ``ud`` and ``du`` branches vanish.
    """
    up1, dn1 = spin_vectors(theta1)
    up2, dn2 = spin_vectors(theta2)
    out = np.zeros((2, 2))
    for j, x in enumerate((up1, dn1)):
        for k, y in enumerate((up2, dn2)):
            t_ud = a * np.conj(x[0]) * np.conj(y[1])
            t_du = -b * np.conj(x[1]) * np.conj(y[0])
            out[j, k] = abs(t_ud) ** 2 + abs(t_du) ** 2 if with_recorders else abs(t_ud + t_du) ** 2
    return out


# -------------------------------------------------------------- random checks


def _trial_rngs(seed: int, trials: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(trials)]


def locality_check(
    dims: Sequence[int] = (2, 2, 2),
    trials: int = 100,
    seed: int = 0,
    identity: bool = False,
) -> ScenarioReport:
    """A entangled with B, C separate; a unitary on B+C must not move A's possible states.

    As a control, a unitary on A+B is applied to the same states; it should
    move them.
    """
    if len(dims) != 3 or min(dims) < 2:
        raise DimensionError(f"need three dimensions >= 2, got {tuple(dims)}")
    da, db, dc = (int(d) for d in dims)
    space = CompositeSpace.of(("A", da), ("B", db), ("C", dc))
    report = ScenarioReport("locality", _systems(space))
    t = report.table("trials", "A's possible states under remote and local unitaries",
                     ("trial", "schmidt_rank", "remote_deviation", "min_overlap", "local_deviation"))
    worst, worst_overlap, local = 0.0, 1.0, []
    for i, rng in enumerate(_trial_rngs(seed, trials)):
        r = min(da, db)
        coeffs = rng.random(r) + 0.05
        coeffs /= np.linalg.norm(coeffs)
        ua, ub = random_unitary(da, rng), random_unitary(db, rng)
        ab = sum(coeffs[j] * np.kron(ua[:, j], ub[:, j]) for j in range(r))
        psi_c = random_state(space.sub("C"), rng)
        ref = ReferenceSystem(PureState(space, np.kron(ab, psi_c.amplitudes)), isolated=True)
        before = possible_internal_states(ref, "A")
        u_bc = np.eye(db * dc) if identity else random_unitary(db * dc, rng)
        moved = ref.evolved(apply_unitary(ref.internal_state, OperatorOnSubset(space.sub("B+C"), u_bc, True)))
        after = possible_internal_states(moved, "A", align_to=before)
        dev = possible_states_deviation(before, after)
        ov = float(np.min(np.max(overlap_matrix(before, after), axis=1)))
        u_ab = random_unitary(da * db, rng)
        probe = ref.evolved(apply_unitary(ref.internal_state, OperatorOnSubset(space.sub("A+B"), u_ab, True)))
        ldev = possible_states_deviation(before, possible_internal_states(probe, "A", align_to=before))
        t.add(i, r, dev, ov, ldev)
        worst, worst_overlap = max(worst, dev), min(worst_overlap, ov)
        local.append(ldev)
    report.check("remote unitary leaves A unchanged", 0.0, worst, TOL,
                 "no local effect of operations on B+C", "le")
    report.check("remote unitary keeps overlaps", 1.0, worst_overlap, TOL,
                 "phase-aligned overlap of A's possible states", "ge")
    if trials:
        report.check("local unitary on A+B moves A", 1e-6, float(np.median(local)), 0.0,
                     "control: operations touching A do change it", "ge")
    report.findings.update(trials=trials, seed=seed, max_remote_deviation=worst,
                           median_local_deviation=float(np.median(local)) if local else 0.0)
    return report


def collapse_correspondence(
    dims: Sequence[int] = (2, 2),
    trials: int = 50,
    seed: int = 0,
    initial: PureState | None = None,
    basis: np.ndarray | None = None,
) -> ScenarioReport:
    """Q = S (+ rest) is read by M in a basis of S.

    For each outcome ``j`` the possible state of Q correlated with pointer
    ``j`` must be ``xi_j`` times the normalized rest ``chi_j``, with weight
    ``||(<xi_j| x 1)|psi>||^2``, and relative to it S must sit in ``xi_j``.
    ``dims[1] == 1`` means Q has no rest.
    """
    ds, dr = (int(d) for d in dims)
    if ds < 2 or dr < 1:
        raise DimensionError(f"need dim(S) >= 2 and dim(rest) >= 1, got {(ds, dr)}")
    pairs = [("S", ds)] + ([("Qr", dr)] if dr > 1 else [])
    space = CompositeSpace.of(*pairs)
    s_space = space.sub("S")
    report = ScenarioReport("collapse", _systems(space) + [("M", ds + 1)])
    t = report.table("trials", "measurement record versus the collapsed state",
                     ("trial", "outcomes", "max_prob_error", "min_fidelity_Q", "min_fidelity_S"))
    worst_p, worst_fq, worst_fs, count_err = 0.0, 1.0, 1.0, 0
    for i, rng in enumerate(_trial_rngs(seed, trials)):
        psi = initial if initial is not None else random_state(space, rng)
        u = basis if basis is not None else random_unitary(ds, rng)
        xis = tuple(PureState(s_space, u[:, j]) for j in range(ds))
        ref = ReferenceSystem(psi.permuted(space.names), isolated=True)
        model = MeasurementModel(s_space, xis, SubsystemLabel("M", ds + 1))
        after = measure(ref, model)
        pointers = [model.pointer_state(j) for j in range(ds)]
        partners = [s for s in (relative_state(after, "M", p)[1] for p in pointers) if s is not None]
        pis_q = possible_internal_states(after, space, align_to=partners)
        outcomes, pe, fq, fs = 0, 0.0, 1.0, 1.0
        for j, xi in enumerate(xis):
            if dr > 1:
                w, chi = relative_state(ref, "S", xi)
                expected = None if chi is None else PureState(space, np.kron(xi.amplitudes, chi.amplitudes))
            else:
                w = abs(np.vdot(xi.amplitudes, ref.internal_state.amplitudes)) ** 2
                expected = xi
            if w < DROP_THRESHOLD:
                continue
            outcomes += 1
            joint = [joint_probability_of(after, [("M", pointers[j]), (space, e.state)]) for e in pis_q]
            k = int(np.argmax(joint))
            pe = max(pe, abs(joint[k] - w), abs(pis_q[k].probability - w))
            fq = min(fq, pis_q[k].state.fidelity(expected))
            rho_s = state_with_respect_to(ReferenceSystem(pis_q[k].state), "S")
            _, vecs = np.linalg.eigh(rho_s.matrix)
            fs = min(fs, PureState(s_space, vecs[:, -1]).fidelity(xi))
        count_err += outcomes != len(pis_q)
        t.add(i, outcomes, pe, fq, fs)
        worst_p, worst_fq, worst_fs = max(worst_p, pe), min(worst_fq, fq), min(worst_fs, fs)
    report.check("record-correlated probability equals Born weight", 0.0, worst_p, TOL,
                 "joint probability of pointer and Q state", "le")
    report.check("Q state is the collapsed state", 1.0, worst_fq, TOL,
                 "xi_j times the normalized rest", "ge")
    report.check("S relative to Q is xi_j", 1.0, worst_fs, TOL,
                 "top eigenvector of S relative to Q", "ge")
    report.check("one Q state per nonzero outcome", 0, count_err, 0, "outcome count")
    report.findings.update(trials=trials, seed=seed)
    return report


__all__ = [
    "BellInequalityRow",
    "BellScanRow",
    "CAT_SYSTEMS",
    "VIOLATION_TOL",
    "bell_closed_form",
    "bell_readings",
    "bell_inequality_scan",
    "bell_scan_rows",
    "collapse_correspondence",
    "locality_check",
    "run_bell",
    "run_bell_report",
    "run_bell_triple",
    "run_cat",
    "run_epr",
    "run_three_spin",
]
