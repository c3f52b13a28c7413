import math

import numpy as np
import pytest

import oracles
from qrs import (
    CompositeSpace,
    DisjointnessError,
    IndexOutOfRangeError,
    IsolationError,
    JointQuery,
    NumericalError,
    PartitionError,
    PureState,
    ReferenceSystem,
    SubsetError,
    check_commutation,
    conditional_evolution_probability,
    joint_distribution,
    joint_probability,
    joint_probability_nested,
    joint_probability_of,
    overlap_matrix,
    possible_internal_states,
    possible_states_deviation,
    relative_state,
    sample_internal_state,
    schmidt_decompose,
    state_with_respect_to,
)

SPACE3 = CompositeSpace.of(("A", 2), ("B", 2), ("C", 2))


def _w_state() -> ReferenceSystem:
    # sqrt(1/2)|001> + 0.5i|010> + 0.5|100>
    psi = np.zeros(8, dtype=complex)
    psi[1], psi[2], psi[4] = math.sqrt(0.5), 0.5j, 0.5
    return ReferenceSystem(PureState(SPACE3, psi), isolated=True)


def _basis(space, name, k):
    return PureState.basis(space.sub(name), [k])


def test_isolation_required():
    ref = ReferenceSystem(_w_state().internal_state, isolated=False)
    with pytest.raises(IsolationError):
        possible_internal_states(ref, "A")
    with pytest.raises(IsolationError):
        joint_probability(ref, JointQuery([("A", 0), ("B", 0)]))
    # the relative state itself does not need isolation
    assert state_with_respect_to(ref, "A").purity() == pytest.approx(0.625)


def test_frozen_w_state_joint_table():
    # values from the dense projector oracle
    ref = _w_state()
    frozen = {(0, 0): 0.5, (0, 1): 0.25, (1, 0): 0.25, (1, 1): 0.0}
    for (a, b), want in frozen.items():
        got = joint_probability_of(ref, [("A", _basis(SPACE3, "A", a)), ("B", _basis(SPACE3, "B", b))])
        assert got == pytest.approx(want, abs=1e-12)


def test_frozen_w_state_possible_states():
    pis = possible_internal_states(_w_state(), "B+C")
    assert pis.probabilities == pytest.approx([0.75, 0.25], abs=1e-12)
    assert len(pis) == 2
    a_pis = possible_internal_states(_w_state(), "A")
    assert a_pis.probabilities == pytest.approx([0.75, 0.25], abs=1e-12)
    assert a_pis.states[0].fidelity(_basis(SPACE3, "A", 0)) == pytest.approx(1.0)


def test_joint_probability_matches_dense_oracle_on_random_states():
    rng = np.random.default_rng(11)
    dims = (2, 3, 2)
    space = CompositeSpace.of(("A", 2), ("B", 3), ("C", 2))
    for _ in range(10):
        vec = oracles.random_vector(12, rng)
        ref = ReferenceSystem(PureState(space, vec), True)
        pa, pc = possible_internal_states(ref, "A"), possible_internal_states(ref, "C")
        for j in range(len(pa)):
            for k in range(len(pc)):
                want = oracles.joint_probability_dense(
                    vec, dims, [((0,), pa[j].state.amplitudes), ((2,), pc[k].state.amplitudes)])
                got = joint_probability(ref, JointQuery([("A", j), ("C", k)]))
                assert got == pytest.approx(want, abs=1e-12)


def test_joint_query_requires_disjoint_subsets():
    with pytest.raises(DisjointnessError):
        JointQuery([("A+B", 0), ("B", 0)])
    with pytest.raises(DisjointnessError):
        joint_probability(_w_state(), [("A", 0), ("A", 1)])


def test_index_out_of_range():
    pis = possible_internal_states(_w_state(), "A")
    with pytest.raises(IndexOutOfRangeError):
        pis[2]
    with pytest.raises(IndexError):
        joint_probability(_w_state(), JointQuery([("A", 5), ("B", 0)]))


def test_non_possible_state_rejected():
    ref = _w_state()
    plus = PureState(SPACE3.sub("A"), np.array([1, 1]) / math.sqrt(2))
    with pytest.raises(NumericalError):
        joint_probability_of(ref, [("A", plus), ("B", _basis(SPACE3, "B", 0))])
    assert not check_commutation(ref, "A", plus)
    ok = check_commutation(ref, "A", _basis(SPACE3, "A", 1))
    assert ok and ok.eigenvalue == pytest.approx(0.25)


def test_joint_distribution_layout_follows_terms():
    ref = _w_state()
    pb = [_basis(SPACE3, "B", k) for k in range(2)]
    pa = [_basis(SPACE3, "A", k) for k in range(2)]
    ba = joint_distribution(ref, [("B", pb), ("A", pa)])
    ab = joint_distribution(ref, [("A", pa), ("B", pb)])
    assert np.allclose(ba, ab.T)
    assert ba.sum() == pytest.approx(1.0)


def test_zero_modes_dropped_and_degenerate_flag():
    space = CompositeSpace.of(("A", 3), ("B", 3))
    psi = (PureState.basis(space, [0, 0]).amplitudes + PureState.basis(space, [1, 1]).amplitudes) / math.sqrt(2)
    pis = possible_internal_states(ReferenceSystem(PureState(space, psi), True), "A")
    assert len(pis) == 2
    assert pis.degenerate
    assert np.allclose(np.abs(pis.matrix()), np.eye(3)[:, :2])


def test_align_to_previous_states():
    space = CompositeSpace.of(("A", 2), ("B", 2))
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    ref = ReferenceSystem(PureState(space, bell), True)
    plus = PureState(space.sub("A"), np.array([1, 1]) / math.sqrt(2))
    minus = PureState(space.sub("A"), np.array([1, -1]) / math.sqrt(2))
    pis = possible_internal_states(ref, "A", align_to=[minus, plus])
    assert pis.states[0].fidelity(minus) == pytest.approx(1.0)
    assert pis.states[1].fidelity(plus) == pytest.approx(1.0)


def test_schmidt_errors_and_permuted_partition():
    psi = _w_state().internal_state
    with pytest.raises(PartitionError):
        schmidt_decompose(psi, ("A", "A+B"))
    with pytest.raises(PartitionError):
        schmidt_decompose(psi, ("A", "B"))
    sd = schmidt_decompose(psi, ("C+B", "A"))
    assert sd.left_states[0].names == ("B", "C")
    assert sd.reconstruct().permuted(psi.names).fidelity(psi) == pytest.approx(1.0, abs=1e-12)
    assert sd.coefficients ** 2 == pytest.approx([0.75, 0.25])


def test_schmidt_product_state_rank_one():
    psi = PureState.basis(SPACE3, [1, 0, 1])
    sd = schmidt_decompose(psi, ("A", "B+C"))
    assert sd.rank == 1 and sd.coefficients[0] == pytest.approx(1.0)


def test_nested_joint_probability_cat_observer():
    space = CompositeSpace.of(("cat", 2), ("obs", 2), ("env", 2))
    psi = math.sqrt(0.3) * PureState.basis(space, [0, 0, 0]).amplitudes + \
        math.sqrt(0.7) * PureState.basis(space, [1, 1, 1]).amplitudes
    ref = ReferenceSystem(PureState(space, psi), True)
    outer = possible_internal_states(ref, "cat+obs")
    inner = possible_internal_states(ref, "obs")
    for j, (lam, phi) in enumerate(outer):
        yo = int(np.argmax(np.abs(phi.amplitudes))) % 2
        for k, (_, chi) in enumerate(inner):
            yi = int(np.argmax(np.abs(chi.amplitudes)))
            want = lam if yo == yi else 0.0
            assert joint_probability_nested(ref, "cat+obs", j, "obs", k) == pytest.approx(want, abs=1e-12)
            assert joint_probability_nested(ref, "cat+obs", j, "obs", k, conditional=True) == \
                pytest.approx(1.0 if yo == yi else 0.0, abs=1e-12)
    with pytest.raises(SubsetError):
        joint_probability_nested(ref, "obs", 0, "cat", 0)


def test_relative_state_weight_and_partner():
    ref = _w_state()
    w, rest = relative_state(ref, "A", _basis(SPACE3, "A", 0))
    assert w == pytest.approx(0.75)
    want = np.array([0, math.sqrt(0.5), 0.5j, 0]) / math.sqrt(0.75)
    assert oracles.phase_aligned_overlap(rest.amplitudes, want) == pytest.approx(1.0)
    w, rest = relative_state(ref, "A+B", PureState.basis(SPACE3.sub("A+B"), [1, 1]))
    assert w == pytest.approx(0.0) and rest is None
    with pytest.raises(SubsetError):
        relative_state(ref, "A+B+C", ref.internal_state)


def test_sampling_is_seeded():
    pis = possible_internal_states(_w_state(), "A")
    draws = [sample_internal_state(pis, s) for s in range(200)]
    assert draws == [sample_internal_state(pis, s) for s in range(200)]
    assert 0.6 < draws.count(0) / 200 < 0.9


def test_deviation_and_overlap_matrix():
    ref = _w_state()
    p = possible_internal_states(ref, "B+C")
    assert possible_states_deviation(p, p) == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(overlap_matrix(p, p), np.eye(len(p)))
    moved = possible_internal_states(ref, "B+C", align_to=list(reversed(p.states)))
    assert possible_states_deviation(p, moved) == pytest.approx(0.0, abs=1e-12)
    a = possible_internal_states(ref, "A")
    flipped = type(a)(tuple(reversed(a.entries)), a.subset, a.reference)
    # probabilities differ by 0.5 and the paired states are orthogonal
    assert possible_states_deviation(a, flipped) == pytest.approx(1.0)


def test_conditional_evolution_probability():
    space = CompositeSpace.of(("A", 2), ("M", 2))
    psi = 0.6 * PureState.basis(space, [0, 0]).amplitudes + 0.8 * PureState.basis(space, [1, 1]).amplitudes
    ref = ReferenceSystem(PureState(space, psi), True)
    assert conditional_evolution_probability(ref, "M", 0, "A", 0) == pytest.approx(0.64)
    assert conditional_evolution_probability(ref, "M", 0, "A", 1) == pytest.approx(0.0, abs=1e-15)


def test_sampling_frequency_for_equal_weights():
    space = CompositeSpace.of(("A", 2), ("B", 2))
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    pis = possible_internal_states(ReferenceSystem(PureState(space, bell), True), "A")
    draws = np.array([sample_internal_state(pis, s) for s in range(100_000)])
    assert abs(np.mean(draws == 0) - 0.5) <= 0.01


def test_precession_between_record_and_query():
    # A is recorded by M, then precesses; P(M j, A k) = lambda_j |<phi_k(t)|U|phi_j(0)>|^2
    rng = np.random.default_rng(21)
    space = CompositeSpace.of(("A", 2), ("M", 2))
    lam = np.array([0.8, 0.2])
    psi = math.sqrt(lam[0]) * np.kron([1, 0], [1, 0]) + math.sqrt(lam[1]) * np.kron([0, 1], [0, 1])
    ref = ReferenceSystem(PureState(space, psi), True)
    u = oracles.haar_unitary(2, rng)
    from qrs import OperatorOnSubset, apply_unitary
    moved = ref.evolved(apply_unitary(ref.internal_state, OperatorOnSubset(space.sub("A"), u, True)))
    rec = possible_internal_states(moved, "M")
    now = possible_internal_states(moved, "A")
    for j in range(2):
        phi_j0 = np.eye(2)[int(np.argmax(np.abs(rec[j].state.amplitudes)))]
        for k in range(len(now)):
            want = lam[int(np.argmax(phi_j0))] * abs(np.vdot(now[k].state.amplitudes, u @ phi_j0)) ** 2
            got = conditional_evolution_probability(moved, "M", j, "A", k)
            assert got == pytest.approx(want, abs=1e-10)


def test_nested_equals_complement_route():
    # P(a, j; b, k) for b inside a equals the disjoint joint law on (I minus a, b)
    rng = np.random.default_rng(22)
    for _ in range(20):
        vec = oracles.random_vector(8, rng)
        ref = ReferenceSystem(PureState(SPACE3, vec), True)
        outer = possible_internal_states(ref, "A+B")
        comp = possible_internal_states(ref, "C")
        inner = possible_internal_states(ref, "B")
        for j in range(len(outer)):
            # the j-th state of A+B pairs with the j-th state of C through the Schmidt form
            jc = comp.match(PureState(SPACE3.sub("C"), comp.states[j].amplitudes))[0]
            for k in range(len(inner)):
                route = joint_probability(ref, JointQuery([("C", jc), ("B", k)]))
                nested = joint_probability_nested(ref, "A+B", j, "B", k)
                assert nested == pytest.approx(route, abs=1e-10)
