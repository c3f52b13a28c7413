"""States relative to reference systems, possible internal states and joint laws."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import (
    DisjointnessError,
    IndexOutOfRangeError,
    IsolationError,
    NumericalError,
    PartitionError,
    SubsetError,
)
from .tensor import (
    DEGENERACY_TOL,
    EXACT_TOL,
    TOL,
    CompositeSpace,
    DensityOperator,
    PureState,
    SubsetLike,
    align_subspace,
    canonical_phase,
    degenerate_blocks,
    hermitian_eigensystem,
    reduced_matrix,
    subset_names,
)

DROP_THRESHOLD = 1e-12


@dataclass(frozen=True, eq=False)
class ReferenceSystem:
    """A system together with its internal state.

    ``isolated`` is declared by the caller and never inferred; the rules that
    talk about possible internal states and joint probabilities refuse to run
    on a reference that is not flagged isolated.
    """

    internal_state: PureState
    isolated: bool = False

    @property
    def subset(self) -> CompositeSpace:
        return self.internal_state.space

    @property
    def names(self) -> tuple[str, ...]:
        return self.internal_state.names

    def evolved(self, state: PureState) -> "ReferenceSystem":
        return ReferenceSystem(state, self.isolated)


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """``psi = sum_j coefficients[j] * phases[j] * left[j] ⊗ right[j]``.

    Both state lists are phase-canonical, so the relative phase of each term is
    carried separately in ``phases``.
    """

    coefficients: np.ndarray
    left_states: tuple[PureState, ...]
    right_states: tuple[PureState, ...]
    phases: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.coefficients)

    def reconstruct(self) -> PureState:
        left, right = self.left_states[0].space, self.right_states[0].space
        vec = sum(
            c * ph * np.kron(l.amplitudes, r.amplitudes)
            for c, ph, l, r in zip(self.coefficients, self.phases, self.left_states, self.right_states)
        )
        return PureState(left + right, vec)


class PossibleState(NamedTuple):
    probability: float
    state: PureState


@dataclass(frozen=True, eq=False)
class PossibleInternalStates:
    entries: tuple[PossibleState, ...]
    subset: CompositeSpace
    reference: tuple[str, ...]
    degenerate: bool = False

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[PossibleState]:
        return iter(self.entries)

    def __getitem__(self, j: int) -> PossibleState:
        if not 0 <= j < len(self.entries):
            raise IndexOutOfRangeError(
                f"index {j} out of range: {self.subset} has {len(self.entries)} possible internal states"
            )
        return self.entries[j]

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([e.probability for e in self.entries])

    @property
    def states(self) -> tuple[PureState, ...]:
        return tuple(e.state for e in self.entries)

    def matrix(self) -> np.ndarray:
        """Columns are the state vectors in ``subset`` order."""
        return np.column_stack([s.amplitudes for s in self.states])

    def match(self, state: PureState) -> tuple[int, float]:
        """Index and fidelity of the entry closest to ``state``."""
        fids = [e.state.fidelity(state) for e in self.entries]
        j = int(np.argmax(fids))
        return j, fids[j]


class CommutationCheck(NamedTuple):
    holds: bool
    commutator_norm: float
    eigenvalue: float

    def __bool__(self):
        return self.holds


class JointQuery:
    """Terms ``(subset, index)`` over pairwise disjoint subsystem subsets."""

    def __init__(self, terms: Sequence[tuple[SubsetLike, int]]):
        parsed = tuple((subset_names(s), int(j)) for s, j in terms)
        seen: dict[str, int] = {}
        for t, (names, _) in enumerate(parsed):
            for n in names:
                if n in seen:
                    raise DisjointnessError(
                        f"terms {seen[n]} and {t} share subsystem {n!r}; a product of "
                        "projectors on overlapping systems is not a single projector. "
                        "Use joint_probability_nested for a system and its subsystem."
                    )
                seen[n] = t
        self.terms = parsed

    def __repr__(self):
        return f"JointQuery({[('+'.join(n), j) for n, j in self.terms]})"


def _require_isolated(ref: ReferenceSystem) -> None:
    if not ref.isolated:
        raise IsolationError(
            f"reference {ref.subset} is not declared isolated; possible internal states "
            "and their probabilities are only defined relative to an isolated system"
        )


def state_with_respect_to(ref: ReferenceSystem, a: SubsetLike) -> DensityOperator:
    kept, rho = reduced_matrix(ref.internal_state, ref.subset.sub(a))
    return DensityOperator(kept, rho)


def _preferred_matrix(kept: CompositeSpace, align_to) -> np.ndarray | None:
    if align_to is None:
        return None
    states = align_to.states if isinstance(align_to, PossibleInternalStates) else tuple(align_to)
    if not states:
        return None
    return np.column_stack([s.permuted(kept.names).amplitudes for s in states])


def possible_internal_states(
    ref: ReferenceSystem, a: SubsetLike, align_to=None
) -> PossibleInternalStates:
    """Eigen-decomposition of the state of ``a`` relative to the isolated ``ref``.

    Zero modes (probability below 1e-12) are dropped. Degenerate nonzero
    eigenvalues get the basis closest to ``align_to`` (a previous step's
    possible states, or any list of states on ``a``) and then to the
    computational basis; the result is flagged ``degenerate``.
    """
    _require_isolated(ref)
    kept, rho = reduced_matrix(ref.internal_state, ref.subset.sub(a))
    values, vectors = hermitian_eigensystem(rho, _preferred_matrix(kept, align_to))
    values = np.where((values < 0) & (values >= -TOL), 0.0, values)
    if values.min() < -TOL:
        raise NumericalError(f"reduced state has eigenvalue {values.min():.3e}")
    keep = values >= DROP_THRESHOLD
    degenerate = any(
        blk.stop - blk.start > 1 and values[blk.start] >= DROP_THRESHOLD
        for blk in degenerate_blocks(values)
    )
    entries = tuple(
        PossibleState(float(values[j]), PureState(kept, vectors[:, j]))
        for j in np.flatnonzero(keep)
    )
    return PossibleInternalStates(entries, kept, ref.names, degenerate)


def schmidt_decompose(psi: PureState, partition: tuple[SubsetLike, SubsetLike]) -> SchmidtDecomposition:
    a_names, b_names = (subset_names(p) for p in partition)
    if set(a_names) & set(b_names):
        raise PartitionError(f"{'+'.join(a_names)} and {'+'.join(b_names)} overlap")
    if sorted(a_names + b_names) != sorted(psi.names) or not a_names or not b_names:
        raise PartitionError(
            f"{'+'.join(a_names)} | {'+'.join(b_names)} does not cover {psi.space}"
        )
    a_space = psi.space.sub(a_names, PartitionError)
    b_space = psi.space.sub(b_names, PartitionError)
    m = psi.tensor().transpose(psi.space.axes(a_space.names + b_space.names))
    m = m.reshape(a_space.total_dim, b_space.total_dim)
    u, s, vh = np.linalg.svd(m)
    r = int(np.count_nonzero(s**2 >= DROP_THRESHOLD))
    u, s, vh = u[:, :r], s[:r], vh[:r, :]
    for blk in degenerate_blocks(s**2, DEGENERACY_TOL):
        if blk.stop - blk.start > 1:
            aligned = align_subspace(u[:, blk])
            q = u[:, blk].conj().T @ aligned
            u[:, blk] = aligned
            vh[blk, :] = q.conj().T @ vh[blk, :]
    lefts, rights, phases = [], [], []
    for j in range(r):
        lc, rc = canonical_phase(u[:, j]), canonical_phase(vh[j, :])
        phases.append(np.vdot(lc, u[:, j]) * np.vdot(rc, vh[j, :]))
        lefts.append(PureState(a_space, lc))
        rights.append(PureState(b_space, rc))
    return SchmidtDecomposition(s.copy(), tuple(lefts), tuple(rights), np.array(phases))


def sample_internal_state(pis: PossibleInternalStates, seed: int) -> int:
    p = pis.probabilities
    cdf = np.cumsum(p / p.sum())
    u = np.random.default_rng(seed).random()
    return int(min(np.searchsorted(cdf, u, side="right"), len(p) - 1))


def check_commutation(ref: ReferenceSystem, a: SubsetLike, candidate_internal: PureState) -> CommutationCheck:
    """Does ``candidate_internal`` commute with the state of ``a`` relative to ``ref``?"""
    kept, rho = reduced_matrix(ref.internal_state, ref.subset.sub(a))
    vec = candidate_internal.permuted(kept.names).amplitudes
    proj = np.outer(vec, vec.conj())
    comm = proj @ rho - rho @ proj
    norm = float(np.linalg.norm(comm))
    return CommutationCheck(norm < TOL, norm, float(np.real(np.vdot(vec, rho @ vec))))


def joint_distribution(
    ref: ReferenceSystem,
    terms: Sequence[tuple[SubsetLike, Sequence[PureState]]],
    require_possible: bool = True,
) -> np.ndarray:
    """Joint probabilities for every combination of states on disjoint subsets.

    ``out[j1, ..., jn]`` is ``Tr[pi_1 ... pi_n rho_{A_1+...+A_n}]`` with
    ``pi_i`` the projector on the ``j_i``-th state listed for term ``i``. The
    reduced state of the union is formed once. With ``require_possible`` every
    listed state must commute with its subsystem's reduced state, i.e. be a
    possible internal state (zero-probability eigenvectors included).
    """
    _require_isolated(ref)
    JointQuery([(s, 0) for s, _ in terms])
    spaces, columns = [], []
    for subset, states in terms:
        space = ref.subset.sub(subset)
        vecs = [s.permuted(space.names).amplitudes for s in states]
        if require_possible:
            _, rho_a = reduced_matrix(ref.internal_state, space)
            for v in vecs:
                proj = np.outer(v, v.conj())
                norm = float(np.linalg.norm(proj @ rho_a - rho_a @ proj))
                if norm >= TOL:
                    raise NumericalError(
                        f"state on {space} is not a possible internal state "
                        f"(commutator norm {norm:.3e})"
                    )
        spaces.append(space)
        columns.append(np.column_stack(vecs))
    layout = tuple(n for sp in spaces for n in sp.names)
    union = ref.subset.sub(layout)
    phi = columns[0]
    for c in columns[1:]:
        phi = np.einsum("ia,jb->ijab", phi, c).reshape(phi.shape[0] * c.shape[0], -1)
    # rows of phi follow the term layout; move them to the union's order
    n = len(layout)
    layout_dims = [ref.subset.label(name).dim for name in layout]
    perm = [layout.index(name) for name in union.names]
    phi = phi.reshape(layout_dims + [-1]).transpose(perm + [n]).reshape(union.total_dim, -1)
    _, rho = reduced_matrix(ref.internal_state, union)
    values = np.einsum("ia,ij,ja->a", phi.conj(), rho, phi)
    if np.max(np.abs(values.imag), initial=0.0) > TOL:
        raise NumericalError("joint probability has a nonzero imaginary part")
    p = values.real
    if p.size and (p.min() < -TOL or p.max() > 1 + TOL):
        raise NumericalError(f"joint probability outside [0, 1]: {p.min()!r}..{p.max()!r}")
    return np.clip(p, 0.0, 1.0).reshape([c.shape[1] for c in columns])


def joint_probability_of(
    ref: ReferenceSystem,
    terms: Sequence[tuple[SubsetLike, PureState]],
    require_possible: bool = True,
) -> float:
    """``Tr[pi_1 ... pi_n rho_{A_1+...+A_n}]`` for single states on disjoint subsets."""
    table = joint_distribution(ref, [(s, [st]) for s, st in terms], require_possible)
    return float(table.reshape(-1)[0])


def joint_probability(ref: ReferenceSystem, q: JointQuery) -> float:
    _require_isolated(ref)
    if not isinstance(q, JointQuery):
        q = JointQuery(q)
    terms = []
    for names, j in q.terms:
        pis = possible_internal_states(ref, names)
        terms.append((names, pis[j].state))
    return joint_probability_of(ref, terms, require_possible=False)


def joint_probability_nested(
    ref: ReferenceSystem,
    a: SubsetLike,
    j: int,
    b: SubsetLike,
    k: int,
    conditional: bool = False,
) -> float:
    """Joint probability for a system ``a`` and its subsystem ``b``.

    The state of ``b`` given that ``a`` is in its ``j``-th possible state is the
    partial trace of that state over ``a \\ b``; its quadratic form on the
    ``k``-th possible state of ``b`` is the conditional probability. The joint
    value multiplies by ``P(a, j)``, which is what routing the query through the
    disjoint pair ``(I \\ a, b)`` gives.
    """
    _require_isolated(ref)
    a_space = ref.subset.sub(a)
    b_names = subset_names(b)
    if not set(b_names) <= set(a_space.names):
        raise SubsetError(f"{'+'.join(b_names)} is not a subsystem of {a_space}")
    lam, phi_a = possible_internal_states(ref, a_space)[j]
    kept, rho_b = reduced_matrix(phi_a, b_names)
    phi_b = possible_internal_states(ref, kept)[k].state.permuted(kept.names).amplitudes
    value = np.vdot(phi_b, rho_b @ phi_b)
    if abs(value.imag) > TOL:
        raise NumericalError(f"nested probability has imaginary part {value.imag:.3e}")
    p = min(max(float(value.real), 0.0), 1.0)
    return p if conditional else lam * p


def conditional_evolution_probability(
    recorded: ReferenceSystem, m: SubsetLike, j: int, a: SubsetLike, k: int
) -> float:
    """Probability that ``a`` was in possible state ``j`` when the recorder ``m``
    read it, and is in its current possible state ``k`` now."""
    return joint_probability(recorded, JointQuery([(m, j), (a, k)]))


def overlap_matrix(p: PossibleInternalStates, q: PossibleInternalStates) -> np.ndarray:
    """``|<p_i|q_j>|`` for two possible-state tables on the same subsystems."""
    names = p.subset.names
    pm = p.matrix()
    qm = np.column_stack([s.permuted(names).amplitudes for s in q.states])
    return np.abs(pm.conj().T @ qm)


def possible_states_deviation(p: PossibleInternalStates, q: PossibleInternalStates) -> float:
    """Largest discrepancy between two possible-state tables.

    Entries are paired in order; probabilities must agree, non-degenerate states
    must agree up to phase (measured as ``1 - |overlap|``) and degenerate groups
    are compared through their spectral projectors.
    """
    if len(p) != len(q):
        return 1.0
    names = p.subset.names
    pv, qv = p.probabilities, q.probabilities
    dev = float(np.max(np.abs(pv - qv), initial=0.0))
    pm = p.matrix()
    qm = np.column_stack([s.permuted(names).amplitudes for s in q.states])
    for blk in degenerate_blocks(pv):
        if blk.stop - blk.start == 1:
            dev = max(dev, 1.0 - abs(np.vdot(pm[:, blk.start], qm[:, blk.start])))
        else:
            pp = pm[:, blk] @ pm[:, blk].conj().T
            qp = qm[:, blk] @ qm[:, blk].conj().T
            dev = max(dev, float(np.max(np.abs(pp - qp))))
    return dev


def relative_state(ref: ReferenceSystem, subset: SubsetLike, state: PureState) -> tuple[float, PureState | None]:
    """Project ``subset`` of ``ref`` onto ``state``; return the weight and the
    normalized state left on the rest (``None`` when the weight vanishes)."""
    space = ref.subset.sub(subset)
    rest = ref.subset.complement(space.names)
    if not rest.names:
        raise SubsetError(f"{space} leaves nothing of {ref.subset}")
    axes = ref.subset.axes(space.names + rest.names)
    m = ref.internal_state.tensor().transpose(axes).reshape(space.total_dim, rest.total_dim)
    vec = state.permuted(space.names).amplitudes.conj() @ m
    w = float(np.vdot(vec, vec).real)
    if w < DROP_THRESHOLD:
        return w, None
    return w, PureState(rest, vec / np.sqrt(w))


__all__ = [
    "DROP_THRESHOLD",
    "EXACT_TOL",
    "CommutationCheck",
    "JointQuery",
    "PossibleInternalStates",
    "PossibleState",
    "ReferenceSystem",
    "SchmidtDecomposition",
    "check_commutation",
    "conditional_evolution_probability",
    "joint_probability",
    "joint_probability_nested",
    "joint_distribution",
    "joint_probability_of",
    "overlap_matrix",
    "possible_internal_states",
    "possible_states_deviation",
    "relative_state",
    "sample_internal_state",
    "schmidt_decompose",
    "state_with_respect_to",
]
