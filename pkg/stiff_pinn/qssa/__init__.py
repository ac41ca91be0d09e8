# Quasi-steady-state reduction: partition selection and algebraic closure
from .closure import (
    CLOSURE_MODES,
    ClosureSolveReport,
    ReducedRhs,
    ReducedSystem,
    closure_jacobian,
    closure_onset,
    closure_residual_norm,
    closure_tangent,
    full_state,
    reduced_jacobian,
    reduced_rhs,
    rober_rate_constants,
    solve_qss_closure,
)
from .partition import (
    QssPartition,
    parse_partition,
    select_qss_species,
    serialize_partition,
    species_maxima,
)

__all__ = [
    "CLOSURE_MODES",
    "closure_jacobian",
    "closure_onset",
    "closure_residual_norm",
    "closure_tangent",
    "ClosureSolveReport",
    "full_state",
    "parse_partition",
    "QssPartition",
    "reduced_jacobian",
    "reduced_rhs",
    "ReducedRhs",
    "ReducedSystem",
    "rober_rate_constants",
    "select_qss_species",
    "serialize_partition",
    "solve_qss_closure",
    "species_maxima",
]
