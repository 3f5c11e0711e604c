"""Ultrafunctions on nested spectral subspaces.

Functions are coefficient vectors on a chain of finite-dimensional levels;
limits along the chain are read off level-indexed nets.
"""

__version__ = "0.1.0"

from .levels import (
    DEFAULT_TOL,
    FINITE,
    INFINITE,
    INFINITESIMAL,
    UNDETERMINED,
    LambdaNet,
    LevelSchedule,
    NumClass,
    ScheduleMismatch,
    classify,
    hyperfinite_sum,
    infinitely_close,
    make_schedule,
    net_add,
    net_const,
    net_mul,
    shadow,
)
from .basis import (
    FOURIER_RING,
    HERMITE_LINE,
    SINE_BOX,
    BasisSpec,
    DomainError,
    QuadratureRule,
    TensorOperator,
    basis_eval,
    basis_grad,
    gram_matrix,
    make_quadrature,
)
from .ultrafun import (
    DISTRIBUTIONAL_LIKE,
    PROPER_LIKE,
    STANDARD_LIKE,
    NonFiniteError,
    Ultrafunction,
    UltrafunNet,
    classify_diagnostic,
    delta,
    dual_project,
    embed,
    evaluate,
    extend_op,
    inner,
    pointwise,
    project,
)
from .dirichlet import SourceSpec, energy, oscillatory_report, solve_level, solve_net, stiffness
from .bubbling import MinimizeOptions, barycenter, concentration_ratio, m_table, minimize_on_Mp
from .qm import (
    ObservableMatrix,
    SpectralDecomposition,
    commutator_defect,
    delta_type_check,
    eigh,
    evolve,
    hamiltonian,
    momentum_matrix,
    position_matrix,
    transition_probability,
)
