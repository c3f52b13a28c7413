import numpy as np
import pytest

import oracles
from qrs import (
    CapacityError,
    CompositeSpace,
    DensityOperator,
    DimensionError,
    LabelError,
    NormalizationError,
    NumericalError,
    OperatorOnSubset,
    PureState,
    SubsetError,
    SubsystemLabel,
    UnitarityError,
    apply_unitary,
    embed_operator,
    partial_trace,
    reduced_state,
    tensor_product,
)
from qrs.tensor import align_subspace, canonical_phase, hermitian_eigensystem, random_unitary


def _space(*dims):
    return CompositeSpace.of(*[(chr(ord("A") + i), d) for i, d in enumerate(dims)])


def test_label_validation():
    with pytest.raises(LabelError):
        SubsystemLabel("1bad", 2)
    with pytest.raises(DimensionError):
        SubsystemLabel("A", 1)
    with pytest.raises(LabelError):
        CompositeSpace.of(("A", 2), ("A", 3))


def test_capacity_cap():
    with pytest.raises(CapacityError):
        CompositeSpace.of(("A", 64), ("B", 65))
    assert CompositeSpace.of(("A", 64), ("B", 64)).total_dim == 4096


def test_sub_keeps_canonical_order():
    sp = _space(2, 3, 4)
    assert sp.sub("C+A").names == ("A", "C")
    assert sp.sub(["B"]).dims == (3,)
    assert sp.complement("B").names == ("A", "C")
    with pytest.raises(SubsetError):
        sp.sub("D")
    with pytest.raises(SubsetError):
        sp.sub("A+A")
    with pytest.raises(LabelError):
        sp.sub("A+")


def test_canonical_phase_first_entry_real_positive():
    v = canonical_phase(np.array([0, 1j, 1]) / np.sqrt(2))
    assert v[1].imag == 0 and v[1].real > 0
    assert np.allclose(v, np.array([0, 1, -1j]) / np.sqrt(2))


def test_pure_state_normalization():
    sp = _space(2)
    with pytest.raises(NormalizationError):
        PureState(sp, [1, 1])
    with pytest.raises(DimensionError):
        PureState(sp, [1, 0, 0])
    with pytest.raises(NormalizationError):
        PureState.from_vector(sp, [0, 0])
    s = PureState.from_vector(sp, [3, 4j])
    assert np.allclose(s.amplitudes, [0.6, 0.8j])


def test_basis_state_and_permutation():
    sp = _space(2, 3)
    s = PureState.basis(sp, [1, 2])
    assert s.amplitudes[5] == 1
    p = s.permuted(("B", "A"))
    assert p.names == ("B", "A") and p.amplitudes[2 * 2 + 1] == 1
    assert p.fidelity(s) == pytest.approx(1.0)
    with pytest.raises(DimensionError):
        PureState.basis(sp, [2, 0])


def test_tensor_product_matches_kron():
    rng = np.random.default_rng(1)
    a = PureState(_space(2), oracles.random_vector(2, rng))
    b = PureState(CompositeSpace.of(("B", 3)), oracles.random_vector(3, rng))
    ab = tensor_product(a, b)
    assert ab.names == ("A", "B")
    assert oracles.phase_aligned_overlap(ab.amplitudes, np.kron(a.amplitudes, b.amplitudes)) == pytest.approx(1.0)


def test_partial_trace_matches_loop_oracle():
    rng = np.random.default_rng(3)
    dims = (2, 3, 2)
    sp = _space(*dims)
    vec = oracles.random_vector(12, rng)
    psi = PureState(sp, vec)
    for keep in [(0,), (1,), (2,), (0, 2), (1, 2), (0, 1)]:
        names = "+".join(sp.names[i] for i in keep)
        want = oracles.partial_trace_loops(psi.amplitudes, dims, keep)
        assert np.max(np.abs(reduced_state(psi, names).matrix - want)) < 1e-12
        assert np.max(np.abs(partial_trace(psi.projector(), names).matrix - want)) < 1e-12


def test_density_operator_validation():
    sp = _space(2)
    with pytest.raises(NumericalError):
        DensityOperator(sp, np.array([[0.5, 0.1], [0.2, 0.5]]))
    with pytest.raises(NumericalError):
        DensityOperator(sp, np.diag([0.7, 0.4]))
    with pytest.raises(NumericalError):
        DensityOperator(sp, np.diag([1.2, -0.2]))
    rho = DensityOperator(sp, np.diag([1.0, 0.0]))
    assert rho.purity() == pytest.approx(1.0)


def test_embed_operator_matches_dense_oracle():
    rng = np.random.default_rng(5)
    dims = (2, 3, 2)
    sp = _space(*dims)
    u = random_unitary(4, rng)
    op = OperatorOnSubset(sp.sub("C+A"), u, unitary=True)
    full = embed_operator(op, sp)
    assert np.max(np.abs(full.matrix - oracles.embed_dense(u, (0, 2), dims))) < 1e-12


def test_embed_operator_respects_operator_order():
    # operator written on (C, A) rather than the space's (A, C)
    sp = _space(2, 2, 2)
    x = np.array([[0, 1], [1, 0]])
    op_space = CompositeSpace((sp.label("C"), sp.label("A")))
    op = OperatorOnSubset(op_space, np.kron(x, np.eye(2)), unitary=True)
    psi = PureState.basis(sp, [0, 0, 0])
    out = apply_unitary(psi, op)
    assert out.amplitudes[np.ravel_multi_index((0, 0, 1), (2, 2, 2))] == pytest.approx(1)
    emb = embed_operator(op, sp)
    assert np.allclose(emb.matrix @ psi.amplitudes, out.amplitudes)


def test_apply_unitary_matches_dense_oracle():
    rng = np.random.default_rng(6)
    dims = (2, 3, 2)
    sp = _space(*dims)
    psi = PureState(sp, oracles.random_vector(12, rng))
    u = random_unitary(6, rng)
    out = apply_unitary(psi, OperatorOnSubset(sp.sub("A+B"), u, True))
    want = oracles.embed_dense(u, (0, 1), dims) @ psi.amplitudes
    assert oracles.phase_aligned_overlap(out.amplitudes, want) == pytest.approx(1.0, abs=1e-12)


def test_nonunitary_rejected():
    sp = _space(2)
    with pytest.raises(UnitarityError):
        OperatorOnSubset(sp, np.diag([1.0, 0.5]), unitary=True)
    with pytest.raises(DimensionError):
        OperatorOnSubset(sp, np.eye(3))


def test_apply_unitary_outside_space():
    sp = _space(2)
    other = CompositeSpace.of(("Z", 2))
    with pytest.raises(SubsetError):
        apply_unitary(PureState.basis(sp, [0]), OperatorOnSubset(other, np.eye(2), True))


def test_hermitian_eigensystem_degenerate_basis_is_computational():
    values, vectors = hermitian_eigensystem(np.eye(3) / 3)
    assert np.allclose(values, [1 / 3] * 3)
    assert np.allclose(np.abs(vectors), np.eye(3))


def test_align_subspace_prefers_given_vectors():
    rng = np.random.default_rng(8)
    u = random_unitary(4, rng)
    block = u[:, :2] @ random_unitary(2, rng)
    out = align_subspace(block, u[:, :2])
    for k in range(2):
        assert abs(np.vdot(out[:, k], u[:, k])) == pytest.approx(1.0, abs=1e-12)


def test_hermitian_eigensystem_rejects_non_hermitian():
    with pytest.raises(NumericalError):
        hermitian_eigensystem(np.array([[1, 1], [0, 1]]))


def test_eigensystem_reconstructs_random_hermitian():
    rng = np.random.default_rng(9)
    for d in (2, 5, 17, 64):
        z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = z + z.conj().T
        w, v = hermitian_eigensystem(h)
        assert np.max(np.abs((v * w) @ v.conj().T - h)) < 1e-10 * max(1.0, np.abs(h).max())
        assert np.all(np.diff(w) <= 0)


def test_unitaries_preserve_norm():
    rng = np.random.default_rng(10)
    sp = _space(2, 3)
    for _ in range(1000):
        psi = PureState(sp, oracles.random_vector(6, rng))
        out = apply_unitary(psi, OperatorOnSubset(sp, random_unitary(6, rng), True))
        assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-12
