"""Relative-state quantum calculus.

States of subsystems are taken relative to an isolated reference system; the
eigenstates of a reduced state are its possible internal states, and joint
probabilities for disjoint subsystems come from products of their projectors.
"""

from .calculus import (
    JointQuery,
    PossibleInternalStates,
    ReferenceSystem,
    SchmidtDecomposition,
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
from .dynamics import (
    EulerAngles,
    MeasurementModel,
    SpinDirection,
    epr_euler_angles,
    epr_partner_state,
    measure,
    measurement_outcome_distribution,
    qnd_unitary,
    spin_eigenstates,
)
from .errors import *  # noqa: F401,F403
from .report import Assertion, ScenarioReport, Table
from .scenarios import (
    BellScanRow,
    bell_inequality_scan,
    collapse_correspondence,
    locality_check,
    run_bell,
    run_cat,
    run_epr,
    run_three_spin,
)
from .tensor import (
    CompositeSpace,
    DensityOperator,
    OperatorOnSubset,
    PureState,
    SubsystemLabel,
    apply_unitary,
    embed_operator,
    partial_trace,
    reduced_state,
    tensor_product,
)

__version__ = "0.1.0"
