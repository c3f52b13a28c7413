"""QND measurement models, spin-direction eigenstates and EPR partner states."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .calculus import ReferenceSystem, _require_isolated
from .errors import (
    DegenerateBranchError,
    DimensionError,
    DisjointnessError,
    NormalizationError,
    NumericalError,
    PhaseUndefinedError,
    SubsetError,
)
from .tensor import (
    TOL,
    CompositeSpace,
    OperatorOnSubset,
    PureState,
    SubsetLike,
    SubsystemLabel,
    align_subspace,
    apply_unitary,
    reduced_matrix,
    tensor_product,
)

SPIN_X = np.array([[0, 1], [1, 0]], dtype=complex) / 2
SPIN_Y = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
SPIN_Z = np.array([[1, 0], [0, -1]], dtype=complex) / 2

Outcome = Union[str, int]


def complete_basis(states: Sequence[PureState], space: CompositeSpace) -> tuple[PureState, ...]:
    """Extend orthonormal ``states`` on ``space`` to a full basis.

    The extra vectors span the orthogonal complement and are chosen closest to
    the computational basis.
    """
    vecs = np.column_stack([s.permuted(space.names).amplitudes for s in states])
    gram = vecs.conj().T @ vecs
    if np.max(np.abs(gram - np.eye(len(states)))) > TOL:
        raise NumericalError("basis states are not orthonormal")
    d = space.total_dim
    if len(states) == d:
        return tuple(s.permuted(space.names) for s in states)
    comp = np.eye(d) - vecs @ vecs.conj().T
    w, v = np.linalg.eigh((comp + comp.conj().T) / 2)
    extra = align_subspace(v[:, w > 0.5])
    return tuple(s.permuted(space.names) for s in states) + tuple(
        PureState(space, extra[:, j]) for j in range(extra.shape[1])
    )


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """A device ``M`` that reads ``target`` in ``basis``.

    Basis state ``j`` moves the pointer from ``ready_state`` to ``pointers[j]``.
    A pointer equal to the ready state marks a basis state the device does not
    register (the device is left untouched).
    """

    target: CompositeSpace
    basis: tuple[PureState, ...]
    device: SubsystemLabel
    ready_state: int = 0
    pointers: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.device.name in self.target.names:
            raise DisjointnessError(f"device {self.device.name} is part of the measured system")
        basis = tuple(s.permuted(self.target.names) for s in self.basis)
        d = self.target.total_dim
        if len(basis) != d:
            raise DimensionError(f"basis has {len(basis)} states, {self.target} needs {d}")
        vecs = np.column_stack([s.amplitudes for s in basis])
        if np.max(np.abs(vecs.conj().T @ vecs - np.eye(d))) > TOL:
            raise NumericalError("measured basis is not orthonormal")
        object.__setattr__(self, "basis", basis)
        dm = self.device.dim
        if not 0 <= self.ready_state < dm:
            raise DimensionError(f"ready state {self.ready_state} outside device dimension {dm}")
        if self.pointers is None:
            if dm < d + 1:
                raise DimensionError(
                    f"device {self.device.name} has dimension {dm}; {d} outcomes need {d + 1}"
                )
            free = [k for k in range(dm) if k != self.ready_state]
            object.__setattr__(self, "pointers", tuple(free[:d]))
        else:
            ptrs = tuple(int(p) for p in self.pointers)
            if len(ptrs) != d:
                raise DimensionError(f"{len(ptrs)} pointers for {d} basis states")
            active = [p for p in ptrs if p != self.ready_state]
            if any(not 0 <= p < dm for p in ptrs):
                raise DimensionError(f"pointer index outside device dimension {dm}")
            if len(set(active)) != len(active):
                raise DimensionError("pointer states must be distinct")
            object.__setattr__(self, "pointers", ptrs)

    @classmethod
    def create(
        cls,
        target: CompositeSpace,
        states: Sequence[PureState],
        device: str,
        device_dim: int | None = None,
        pointers: Sequence[int] | None = None,
    ) -> "MeasurementModel":
        """Build a model, completing ``states`` to a basis and sizing the device."""
        basis = complete_basis(states, target)
        dim = device_dim if device_dim is not None else len(basis) + 1
        return cls(target, basis, SubsystemLabel(device, dim), 0,
                   None if pointers is None else tuple(pointers))

    def pointer_state(self, j: int) -> PureState:
        return PureState.basis(CompositeSpace((self.device,)), [self.pointers[j]])


def qnd_unitary(model: MeasurementModel) -> OperatorOnSubset:
    """Controlled cyclic shift of the pointer, conditioned on the basis index."""
    dm = model.device.dim
    shift = np.roll(np.eye(dm), 1, axis=0)
    d = model.target.total_dim
    u = np.zeros((d * dm, d * dm), dtype=complex)
    for phi, p in zip(model.basis, model.pointers):
        proj = np.outer(phi.amplitudes, phi.amplitudes.conj())
        u += np.kron(proj, np.linalg.matrix_power(shift, (p - model.ready_state) % dm))
    return OperatorOnSubset(model.target + CompositeSpace((model.device,)), u, unitary=True)


def measure(ref: ReferenceSystem, model: MeasurementModel) -> ReferenceSystem:
    """Couple a fresh device in its ready state to ``ref`` and run the QND step.

    The device is assumed isolated before the measurement, so the enlarged
    system keeps ``ref``'s isolation flag.
    """
    if model.device.name in ref.names:
        raise DisjointnessError(f"device {model.device.name} already belongs to {ref.subset}")
    ref.subset.sub(model.target.names)
    ready = PureState.basis(CompositeSpace((model.device,)), [model.ready_state])
    joint = tensor_product(ref.internal_state, ready)
    return ReferenceSystem(apply_unitary(joint, qnd_unitary(model)), ref.isolated)


def measurement_outcome_distribution(ref: ReferenceSystem, model: MeasurementModel) -> list[tuple[int, float]]:
    _require_isolated(ref)
    kept, rho = reduced_matrix(ref.internal_state, ref.subset.sub(model.target.names))
    probs = []
    for k, phi in enumerate(model.basis):
        v = phi.permuted(kept.names).amplitudes
        probs.append((k, min(max(float(np.real(np.vdot(v, rho @ v))), 0.0), 1.0)))
    total = sum(p for _, p in probs)
    if abs(total - 1.0) > TOL:
        raise NumericalError(f"outcome probabilities sum to {total!r}")
    return probs


@dataclass(frozen=True)
class SpinDirection:
    """Quantization axis tilted by ``delta`` radians away from z."""

    delta: float

    def __post_init__(self):
        if not math.isfinite(self.delta):
            raise ValueError(f"non-finite angle {self.delta!r}")


@dataclass(frozen=True)
class EulerAngles:
    """Frame rotation ``exp(-i gamma Sz) exp(i beta Sy) exp(-i alpha Sz)``.

    ``beta`` lies in [0, pi]; ``alpha`` and ``gamma`` in (-pi, pi]. The rotated
    z axis is ``(-sin b cos g, -sin b sin g, cos b)``; ``alpha`` only turns the
    transverse axes. With ``alpha = gamma = 0`` and ``beta = delta`` this is the
    tilt used by :func:`spin_eigenstates`.
    """

    alpha: float
    beta: float
    gamma: float

    def axis(self) -> np.ndarray:
        sb = math.sin(self.beta)
        return np.array([-sb * math.cos(self.gamma), -sb * math.sin(self.gamma), math.cos(self.beta)])

    def rotation(self) -> np.ndarray:
        def expm_herm(h, t):
            w, v = np.linalg.eigh(h)
            return (v * np.exp(-1j * t * w)) @ v.conj().T

        return expm_herm(SPIN_Z, self.gamma) @ expm_herm(SPIN_Y, -self.beta) @ expm_herm(SPIN_Z, self.alpha)

    def spin_operator(self) -> np.ndarray:
        """Spin component along the rotated z axis."""
        r = self.rotation()
        return r @ SPIN_Z @ r.conj().T


def spin_vectors(delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Raw (+1/2, -1/2) eigenvectors along the axis tilted by ``delta``.

    No phase convention is applied, so ``delta + 2*pi`` flips both signs.
    """
    c, s = math.cos(delta / 2), math.sin(delta / 2)
    return np.array([c, -s], dtype=complex), np.array([s, c], dtype=complex)


def spin_operator(delta: float) -> np.ndarray:
    return EulerAngles(0.0, delta, 0.0).spin_operator()


def spin_eigenstates(d: SpinDirection | float, label: str = "P") -> tuple[PureState, PureState]:
    delta = d.delta if isinstance(d, SpinDirection) else float(d)
    space = CompositeSpace((SubsystemLabel(label, 2),))
    up, down = spin_vectors(delta)
    return PureState(space, up), PureState(space, down)


def _sign(outcome: Outcome) -> int:
    if outcome in ("+", 1, "up"):
        return 1
    if outcome in ("-", -1, "down"):
        return -1
    raise ValueError(f"outcome must be '+' or '-', got {outcome!r}")


def _check_pair(a: complex, b: complex) -> None:
    if abs(abs(a) ** 2 + abs(b) ** 2 - 1.0) > TOL:
        raise NormalizationError(f"|a|^2 + |b|^2 = {abs(a) ** 2 + abs(b) ** 2!r}, expected 1")


def epr_partner_vector(a: complex, b: complex, delta: float, outcome: Outcome) -> np.ndarray:
    """Unnormalized particle-2 branch, components ordered (up, down)."""
    c, s = math.cos(delta / 2), math.sin(delta / 2)
    if _sign(outcome) > 0:
        return np.array([b * s, a * c], dtype=complex)
    return np.array([-b * c, a * s], dtype=complex)


def epr_partner_state(
    a: complex, b: complex, d: SpinDirection | float, outcome: Outcome, label: str = "P2"
) -> PureState:
    _check_pair(a, b)
    delta = d.delta if isinstance(d, SpinDirection) else float(d)
    vec = epr_partner_vector(a, b, delta, outcome)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        raise DegenerateBranchError(
            f"outcome {outcome!r} has zero amplitude for a={a}, b={b}, delta={delta}"
        )
    return PureState(CompositeSpace((SubsystemLabel(label, 2),)), vec / norm)


def _wrap(angle: float) -> float:
    w = math.remainder(angle, 2 * math.pi)
    return math.pi if w <= -math.pi else w + 0.0


def epr_euler_angles(a: complex, b: complex, d: SpinDirection | float, outcome: Outcome) -> EulerAngles:
    """Frame whose z axis makes the partner state a spin eigenstate.

    For outcome ``+`` the partner is the -1/2 eigenstate, for ``-`` the +1/2
    one. ``tan(beta/2)`` is ``|b/a| tan(delta/2)`` (``|a/b|`` for ``-``) and the
    azimuth comes from the phase of ``b/a``; a negative ``tan(delta/2)`` is
    absorbed into the azimuth so that ``beta`` stays in [0, pi].
    """
    _check_pair(a, b)
    if abs(a) < 1e-15 or abs(b) < 1e-15:
        raise PhaseUndefinedError("Euler angles need a != 0 and b != 0")
    delta = d.delta if isinstance(d, SpinDirection) else float(d)
    c, s = math.cos(delta / 2), math.sin(delta / 2)
    flip = math.pi if s * c < 0 else 0.0
    ab_phase = np.angle(a * b)
    if _sign(outcome) > 0:
        beta = 2 * math.atan2(abs(b) * abs(s), abs(a) * abs(c))
        gamma = -(np.angle(b / a) + flip)
        alpha = ab_phase
    else:
        beta = 2 * math.atan2(abs(a) * abs(s), abs(b) * abs(c))
        gamma = np.angle(a / b) + flip
        alpha = -ab_phase
    return EulerAngles(_wrap(float(alpha)), beta, _wrap(float(gamma)))


__all__ = [
    "EulerAngles",
    "MeasurementModel",
    "SPIN_X",
    "SPIN_Y",
    "SPIN_Z",
    "SpinDirection",
    "complete_basis",
    "epr_euler_angles",
    "epr_partner_state",
    "epr_partner_vector",
    "measure",
    "measurement_outcome_distribution",
    "qnd_unitary",
    "spin_eigenstates",
    "spin_operator",
    "spin_vectors",
]
