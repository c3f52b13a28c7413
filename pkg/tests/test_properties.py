import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qrs import (
    CompositeSpace,
    MeasurementModel,
    OperatorOnSubset,
    PureState,
    ReferenceSystem,
    apply_unitary,
    epr_euler_angles,
    epr_partner_state,
    joint_distribution,
    measure,
    possible_internal_states,
    reduced_state,
    run_bell,
    schmidt_decompose,
)
from qrs.script import parse, serialize
from qrs.tensor import canonical_phase

SETTINGS = settings(max_examples=40, deadline=None)
seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.lists(st.integers(min_value=2, max_value=4), min_size=2, max_size=3)


def _ref(seed, ds):
    rng = np.random.default_rng(seed)
    space = CompositeSpace.of(*[(f"S{i}", d) for i, d in enumerate(ds)])
    vec = oracles.random_vector(space.total_dim, rng)
    return rng, ReferenceSystem(PureState(space, vec), True)


@SETTINGS
@given(seeds, dims, st.data())
def test_reduced_state_is_density_matrix(seed, ds, data):
    _, ref = _ref(seed, ds)
    keep = data.draw(st.sets(st.integers(0, len(ds) - 1), min_size=1, max_size=len(ds) - 1))
    names = [f"S{i}" for i in sorted(keep)]
    rho = reduced_state(ref.internal_state, names).matrix
    want = oracles.partial_trace_loops(ref.internal_state.amplitudes, tuple(ds), tuple(sorted(keep)))
    assert np.max(np.abs(rho - want)) < 1e-12
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.linalg.eigvalsh(rho).min() > -1e-12


@SETTINGS
@given(seeds, dims)
def test_possible_states_are_orthonormal_and_complete(seed, ds):
    _, ref = _ref(seed, ds)
    pis = possible_internal_states(ref, "S0")
    m = pis.matrix()
    assert np.max(np.abs(m.conj().T @ m - np.eye(len(pis)))) < 1e-12
    assert abs(pis.probabilities.sum() - 1) < 1e-10
    assert np.all(np.diff(pis.probabilities) <= 1e-12)
    rho = reduced_state(ref.internal_state, "S0").matrix
    assert np.max(np.abs((m * pis.probabilities) @ m.conj().T - rho)) < 1e-10


@SETTINGS
@given(seeds, dims)
def test_joint_distribution_is_a_distribution(seed, ds):
    _, ref = _ref(seed, ds)
    p0, p1 = possible_internal_states(ref, "S0"), possible_internal_states(ref, "S1")
    table = joint_distribution(ref, [("S0", p0.states), ("S1", p1.states)])
    assert table.min() >= 0
    assert abs(table.sum() - 1) < 1e-10
    assert np.max(np.abs(table.sum(axis=1) - p0.probabilities)) < 1e-10
    assert np.max(np.abs(table.sum(axis=0) - p1.probabilities)) < 1e-10
    swapped = joint_distribution(ref, [("S1", p1.states), ("S0", p0.states)])
    assert np.max(np.abs(swapped - table.T)) < 1e-14


@SETTINGS
@given(seeds, dims)
def test_possible_states_ignore_subsystem_order(seed, ds):
    _, ref = _ref(seed, ds)
    names = ref.names
    flipped = ReferenceSystem(ref.internal_state.permuted(names[::-1]), True)
    a, b = possible_internal_states(ref, "S0"), possible_internal_states(flipped, "S0")
    assert np.max(np.abs(a.probabilities - b.probabilities)) < 1e-12
    for x, y in zip(a.states, b.states):
        assert x.fidelity(y) > 1 - 1e-10


@SETTINGS
@given(seeds, st.integers(2, 6), st.integers(2, 6))
def test_schmidt_reconstructs(seed, da, db):
    rng = np.random.default_rng(seed)
    space = CompositeSpace.of(("A", da), ("B", db))
    psi = PureState(space, oracles.random_vector(da * db, rng))
    sd = schmidt_decompose(psi, ("A", "B"))
    assert np.linalg.norm(sd.reconstruct().amplitudes - psi.amplitudes) < 1e-10
    assert abs(np.sum(sd.coefficients**2) - 1) < 1e-12
    for s in sd.left_states + sd.right_states:
        assert np.allclose(canonical_phase(s.amplitudes), s.amplitudes)


@SETTINGS
@given(seeds, dims)
def test_remote_unitary_leaves_subsystem_alone(seed, ds):
    rng, ref = _ref(seed, ds)
    rest = ref.subset.complement("S0")
    u = oracles.haar_unitary(rest.total_dim, rng)
    moved = ref.evolved(apply_unitary(ref.internal_state, OperatorOnSubset(rest, u, True)))
    assert abs(np.linalg.norm(moved.internal_state.amplitudes) - 1) < 1e-12
    before = reduced_state(ref.internal_state, "S0").matrix
    after = reduced_state(moved.internal_state, "S0").matrix
    assert np.max(np.abs(before - after)) < 1e-12


@SETTINGS
@given(seeds, dims)
def test_qnd_reading_keeps_measured_statistics(seed, ds):
    _, ref = _ref(seed, ds)
    before = possible_internal_states(ref, "S0")
    model = MeasurementModel.create(ref.subset.sub("S0"), before.states, "M")
    after = measure(ref, model)
    again = possible_internal_states(after, "S0", align_to=before)
    assert np.max(np.abs(before.probabilities - again.probabilities)) < 1e-10
    rec = possible_internal_states(after, "M")
    assert np.max(np.abs(np.sort(rec.probabilities) - np.sort(before.probabilities))) < 1e-10


@SETTINGS
@given(seeds, st.floats(-10, 10, allow_nan=False))
def test_euler_frame_diagonalizes_partner(seed, delta):
    rng = np.random.default_rng(seed)
    v = oracles.random_vector(2, rng)
    a, b = complex(v[0]), complex(v[1])
    for outcome, eig in (("+", -0.5), ("-", 0.5)):
        try:
            xi = epr_partner_state(a, b, delta, outcome).amplitudes
        except ValueError:
            continue
        e = epr_euler_angles(a, b, delta, outcome)
        s = oracles.euler_spin_operator(e.alpha, e.beta, e.gamma)
        assert np.linalg.norm(s @ xi - eig * xi) < 1e-10
        assert 0 <= e.beta <= math.pi
        assert -math.pi < e.alpha <= math.pi and -math.pi < e.gamma <= math.pi


angles = st.floats(0, 2 * math.pi, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(angles, angles, angles)
def test_singlet_recorders_never_violate(al, be, ga):
    s = 1 / math.sqrt(2)
    pp = [run_bell(s, s, x, y, with_recorders=True).p_plus_plus for x, y in ((al, be), (al, ga), (ga, be))]
    assert pp[0] - pp[1] - pp[2] <= 1e-10


@settings(max_examples=60, deadline=None)
@given(angles, angles)
def test_singlet_coherent_closed_form(t1, t2):
    s = 1 / math.sqrt(2)
    row = run_bell(s, s, t1, t2)
    assert abs(row.p_plus_plus - oracles.singlet_plus_plus(t1, t2)) < 1e-12
    assert np.allclose(row.marginal1, [0.5, 0.5]) and np.allclose(row.marginal2, [0.5, 0.5])


coeff = st.complex_numbers(min_magnitude=0.05, max_magnitude=3, allow_nan=False, allow_infinity=False)


@SETTINGS
@given(st.lists(st.tuples(coeff, st.integers(0, 2), st.integers(0, 1), st.booleans()), min_size=1, max_size=5),
       st.floats(-720, 720, allow_nan=False))
def test_script_round_trip(terms, angle):
    kets = []
    for c, i, j, swap in terms:
        re, im = repr(float(c.real)), repr(abs(float(c.imag)))
        op = "-" if c.imag < 0 else "+"
        ket = f"|{j},{i}>@(B,A)" if swap else f"|{i},{j}>@(A,B)"
        kets.append(f"({re}{op}{im}i){ket}")
    src = ("system A:3;\nsystem B:2;\nsystem M:3;\n"
           f"state s = {' + '.join(kets)} normalize;\n")
    vec = np.zeros(6, dtype=complex)
    for c, i, j, _ in terms:
        vec[2 * i + j] += c
    if np.linalg.norm(vec) < 1e-6:
        return
    src += f"isolated s;\napply rz(B, {angle!r});\nmeasure B in spin({angle!r}) into M;\nquery possible_states(A);\n"
    doc = parse(src)
    text = serialize(doc)
    assert parse(text) == doc
    assert serialize(parse(text)) == text
