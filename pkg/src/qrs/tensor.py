"""Dense complex linear algebra over composite Hilbert spaces.

States are amplitude vectors laid out row-major in subsystem registration
order; subsets are always permuted to that canonical order before any
contraction, so outputs are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import (
    CapacityError,
    DimensionError,
    DisjointnessError,
    LabelError,
    NormalizationError,
    NumericalError,
    SubsetError,
    UnitarityError,
)

TOL = 1e-10
EXACT_TOL = 1e-12
PHASE_EPS = 1e-9
DEGENERACY_TOL = 1e-9
DEFAULT_MAX_DIM = 4096

SubsetLike = Union[str, Iterable[str], "CompositeSpace"]


def subset_names(subset: SubsetLike) -> tuple[str, ...]:
    """Normalize ``"A+B"``, ``["A", "B"]`` or a space into a tuple of names."""
    if isinstance(subset, CompositeSpace):
        return subset.names
    if isinstance(subset, str):
        parts = [p.strip() for p in subset.split("+")]
        if any(not p for p in parts):
            raise LabelError(f"malformed subsystem subset {subset!r}")
        return tuple(parts)
    names = tuple(subset)
    if not all(isinstance(n, str) for n in names):
        raise LabelError(f"subset must contain subsystem names, got {names!r}")
    return names


@dataclass(frozen=True)
class SubsystemLabel:
    name: str
    dim: int

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name.isidentifier():
            raise LabelError(f"invalid subsystem name {self.name!r}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise DimensionError(f"subsystem {self.name} needs dim >= 2, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))


@dataclass(frozen=True)
class CompositeSpace:
    """Ordered registry of labeled subsystems."""

    subsystems: tuple[SubsystemLabel, ...]
    max_dim: int = field(default=DEFAULT_MAX_DIM, compare=False, repr=False)

    def __post_init__(self):
        subs = tuple(self.subsystems)
        object.__setattr__(self, "subsystems", subs)
        names = [s.name for s in subs]
        if len(set(names)) != len(names):
            raise LabelError(f"duplicate subsystem names in {names}")
        if self.total_dim > self.max_dim:
            raise CapacityError(
                f"total dimension {self.total_dim} exceeds cap {self.max_dim}"
            )

    @classmethod
    def of(cls, *pairs: tuple[str, int], max_dim: int = DEFAULT_MAX_DIM) -> "CompositeSpace":
        return cls(tuple(SubsystemLabel(n, d) for n, d in pairs), max_dim=max_dim)

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.subsystems)

    @cached_property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dim for s in self.subsystems)

    @cached_property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self):
        return len(self.subsystems)

    def __contains__(self, name):
        return name in self.names

    def label(self, name: str) -> SubsystemLabel:
        for s in self.subsystems:
            if s.name == name:
                return s
        raise LabelError(f"unknown subsystem {name!r}; known: {', '.join(self.names)}")

    def axes(self, names: Sequence[str]) -> list[int]:
        idx = {n: i for i, n in enumerate(self.names)}
        return [idx[n] for n in names]

    def sub(self, subset: SubsetLike, error: type = SubsetError) -> "CompositeSpace":
        """Return the subspace for ``subset`` in this space's canonical order."""
        wanted = subset_names(subset)
        if len(set(wanted)) != len(wanted):
            raise error(f"repeated subsystem in {wanted}")
        missing = [n for n in wanted if n not in self.names]
        if missing:
            raise error(
                f"{'+'.join(missing)} not contained in {'+'.join(self.names) or '<empty>'}"
            )
        keep = set(wanted)
        if len(keep) == len(self.subsystems):
            return self
        return CompositeSpace(
            tuple(s for s in self.subsystems if s.name in keep), max_dim=self.max_dim
        )

    def complement(self, subset: SubsetLike) -> "CompositeSpace":
        drop = set(self.sub(subset).names)
        return CompositeSpace(
            tuple(s for s in self.subsystems if s.name not in drop), max_dim=self.max_dim
        )

    def is_disjoint(self, other: "CompositeSpace") -> bool:
        return not set(self.names) & set(other.names)

    def __add__(self, other: "CompositeSpace") -> "CompositeSpace":
        if not self.is_disjoint(other):
            shared = sorted(set(self.names) & set(other.names))
            raise DisjointnessError(f"subsystems {shared} appear in both factors")
        return CompositeSpace(
            self.subsystems + other.subsystems, max_dim=max(self.max_dim, other.max_dim)
        )

    def __str__(self):
        return "+".join(self.names)


def canonical_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate ``vec`` so its first non-negligible entry is real and positive."""
    vec = np.array(vec, dtype=complex)
    mags = np.abs(vec)
    i = int(np.argmax(mags > PHASE_EPS))
    if mags[i] > PHASE_EPS:
        vec *= np.conj(vec[i]) / mags[i]
        vec[i] = vec[i].real
    return vec


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized amplitude vector over a composite space (phase canonicalized)."""

    space: CompositeSpace
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.space.total_dim:
            raise DimensionError(
                f"{amps.shape[0]} amplitudes for a space of dimension {self.space.total_dim}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > TOL:
            raise NormalizationError(f"state norm {norm!r} differs from 1")
        amps = canonical_phase(amps)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_vector(cls, space: CompositeSpace, vec, normalize: bool = True) -> "PureState":
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(vec)
            if norm < EXACT_TOL:
                raise NormalizationError("cannot normalize a zero vector")
            vec = vec / norm
        return cls(space, vec)

    @classmethod
    def basis(cls, space: CompositeSpace, indices: Sequence[int]) -> "PureState":
        if len(indices) != len(space):
            raise DimensionError(f"need {len(space)} indices, got {len(indices)}")
        for i, d in zip(indices, space.dims):
            if not 0 <= i < d:
                raise DimensionError(f"basis index {i} out of range for dimension {d}")
        vec = np.zeros(space.total_dim, dtype=complex)
        vec[np.ravel_multi_index(tuple(indices), space.dims)] = 1.0
        return cls(space, vec)

    @property
    def names(self) -> tuple[str, ...]:
        return self.space.names

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.space.dims)

    def overlap(self, other: "PureState") -> complex:
        other = other.permuted(self.names) if other.names != self.names else other
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "PureState") -> float:
        """Phase-aligned overlap ``|<self|other>|``."""
        return abs(self.overlap(other))

    def permuted(self, order: Sequence[str]) -> "PureState":
        order = tuple(order)
        if sorted(order) != sorted(self.names):
            raise SubsetError(f"{order} is not a reordering of {self.names}")
        if order == self.names:
            return self
        space = CompositeSpace(
            tuple(self.space.label(n) for n in order), max_dim=self.space.max_dim
        )
        amps = self.tensor().transpose(self.space.axes(order)).reshape(-1)
        return PureState(space, amps)

    def projector(self) -> "DensityOperator":
        return DensityOperator(self.space, np.outer(self.amplitudes, self.amplitudes.conj()))

    def __repr__(self):
        return f"PureState({self.space}, {np.array2string(self.amplitudes, precision=4)})"


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, positive-semidefinite, unit-trace matrix on a subsystem subset."""

    subset: CompositeSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.subset.total_dim
        if m.shape != (d, d):
            raise DimensionError(f"matrix shape {m.shape} does not match dimension {d}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > TOL:
            raise NumericalError("density operator is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > TOL:
            raise NumericalError(f"density operator trace {tr!r} differs from 1")
        try:
            np.linalg.cholesky(m + TOL * np.eye(d))
        except np.linalg.LinAlgError:
            raise NumericalError("density operator has an eigenvalue below -1e-10") from None
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def names(self) -> tuple[str, ...]:
        return self.subset.names

    def expectation(self, state: PureState) -> complex:
        if state.names != self.names:
            state = state.permuted(self.names)
        return complex(np.vdot(state.amplitudes, self.matrix @ state.amplitudes))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True, eq=False)
class OperatorOnSubset:
    subset: CompositeSpace
    matrix: np.ndarray
    unitary: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        d = self.subset.total_dim
        if m.shape != (d, d):
            raise DimensionError(f"operator shape {m.shape} does not match dimension {d}")
        if self.unitary:
            check_unitary(m)
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def names(self) -> tuple[str, ...]:
        return self.subset.names


def unitarity_defect(m: np.ndarray) -> float:
    return float(np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0]))))


def check_unitary(m: np.ndarray, tol: float = TOL) -> None:
    defect = unitarity_defect(m)
    if defect > tol:
        raise UnitarityError(f"operator is not unitary (max |UU^+ - 1| = {defect:.3e})")


def tensor_product(a: PureState, b: PureState) -> PureState:
    space = a.space + b.space
    return PureState(space, np.kron(a.amplitudes, b.amplitudes))


def _check_support(op_space: CompositeSpace, space: CompositeSpace, error: type) -> None:
    for lab in op_space.subsystems:
        if lab.name not in space.names:
            raise error(f"operator acts on {lab.name!r}, which is not in {space}")
        if space.label(lab.name).dim != lab.dim:
            raise DimensionError(f"dimension mismatch for {lab.name!r}")


def embed_operator(op: OperatorOnSubset, space: CompositeSpace) -> OperatorOnSubset:
    """Return ``op ⊗ 1`` on ``space``, permuted into the space's layout."""
    _check_support(op.subset, space, LabelError)
    rest = space.complement(op.names)
    layout = op.names + rest.names
    full = np.kron(op.matrix, np.eye(rest.total_dim))
    dims = tuple(space.label(n).dim for n in layout)
    n = len(layout)
    pos = {name: i for i, name in enumerate(layout)}
    perm = [pos[name] for name in space.names]
    full = full.reshape(dims + dims).transpose(perm + [n + p for p in perm])
    d = space.total_dim
    return OperatorOnSubset(space, full.reshape(d, d), unitary=op.unitary)


def partial_trace(rho: DensityOperator, keep: SubsetLike) -> DensityOperator:
    """Trace out everything in ``rho.subset`` that is not in ``keep``."""
    kept = rho.subset.sub(keep)
    n = len(rho.subset)
    if len(kept) == n:
        return rho
    keep_set = set(kept.names)
    row_labels = list(range(n))
    col_labels = [n + i if name in keep_set else i for i, name in enumerate(rho.names)]
    out = [i for i, name in enumerate(rho.names) if name in keep_set]
    out = out + [n + i for i in out]
    t = rho.matrix.reshape(rho.subset.dims * 2)
    reduced = np.einsum(t, row_labels + col_labels, out)
    d = kept.total_dim
    return DensityOperator(kept, reduced.reshape(d, d))


def reduced_matrix(state: PureState, keep: SubsetLike) -> tuple[CompositeSpace, np.ndarray]:
    """Reduced density matrix straight from amplitudes, without forming |psi><psi|."""
    kept = state.space.sub(keep)
    rest = state.space.complement(kept.names)
    axes = state.space.axes(kept.names + rest.names)
    m = state.tensor().transpose(axes).reshape(kept.total_dim, rest.total_dim)
    rho = m @ m.conj().T
    return kept, (rho + rho.conj().T) / 2


def reduced_state(state: PureState, keep: SubsetLike) -> DensityOperator:
    kept, rho = reduced_matrix(state, keep)
    return DensityOperator(kept, rho)


def degenerate_blocks(values: np.ndarray, tol: float = DEGENERACY_TOL) -> list[slice]:
    """Group consecutive (sorted) eigenvalues that agree within ``tol``."""
    blocks = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or abs(values[i] - values[i - 1]) > tol:
            blocks.append(slice(start, i))
            start = i
    return blocks


def align_subspace(block: np.ndarray, preferred: np.ndarray | None = None) -> np.ndarray:
    """Pick a deterministic orthonormal basis of span(``block``).

    Candidate directions are the columns of ``preferred`` followed by the
    computational basis. Each step takes the candidate whose projection onto
    the not-yet-covered part of the subspace is largest (lowest index wins
    ties), so the result is the basis closest to the candidates. The chosen
    vectors are returned in candidate order.
    """
    n, k = block.shape
    candidates = np.eye(n, dtype=complex)
    if preferred is not None and preferred.size:
        candidates = np.hstack([np.asarray(preferred, dtype=complex), candidates])
    residual = block @ (block.conj().T @ candidates)
    picked = []
    for _ in range(k):
        norms = np.linalg.norm(residual, axis=0)
        best = norms.max()
        c = int(np.flatnonzero(norms >= best - DEGENERACY_TOL)[0])
        v = residual[:, c] / norms[c]
        picked.append((c, v))
        residual = residual - np.outer(v, v.conj() @ residual)
    picked.sort(key=lambda p: p[0])
    return np.column_stack([v for _, v in picked])


def hermitian_eigensystem(m, preferred: np.ndarray | None = None):
    """Eigenvalues (descending) and orthonormal eigenvectors of a Hermitian matrix.

    Degenerate eigenspaces get a deterministic basis from :func:`align_subspace`,
    and every eigenvector is phase-canonicalized.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if np.max(np.abs(m - m.conj().T), initial=0.0) > TOL:
        raise NumericalError("matrix is not Hermitian within 1e-10")
    h = (m + m.conj().T) / 2
    values, vectors = np.linalg.eigh(h)
    values = values[::-1].copy()
    vectors = vectors[:, ::-1].copy()
    for blk in degenerate_blocks(values):
        if blk.stop - blk.start > 1:
            vectors[:, blk] = align_subspace(vectors[:, blk], preferred)
    for j in range(vectors.shape[1]):
        vectors[:, j] = canonical_phase(vectors[:, j])
    return values, vectors


def apply_unitary(state: PureState, u: OperatorOnSubset) -> PureState:
    _check_support(u.subset, state.space, SubsetError)
    check_unitary(u.matrix)
    k = len(u.subset)
    ut = u.matrix.reshape(u.subset.dims * 2)
    axes = state.space.axes(u.names)
    out = np.tensordot(ut, state.tensor(), axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return PureState(state.space, out.reshape(-1))


def random_state(space: CompositeSpace, rng: np.random.Generator) -> PureState:
    vec = rng.normal(size=space.total_dim) + 1j * rng.normal(size=space.total_dim)
    return PureState.from_vector(space, vec)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))
