"""Structure-preserving multigrid for Kronecker-structured Markov chains.

All iterates live in truncated tensor-train (TT) format and every grid
level keeps its operator as a sum of Kronecker products.
"""

from .tt import (
    EXACT,
    TTMatrix,
    TTVector,
    TruncationPolicy,
    tt_add,
    tt_apply_modewise,
    tt_dot,
    tt_effective_rank,
    tt_from_elementary,
    tt_from_full,
    tt_matvec,
    tt_norm,
    tt_ones,
    tt_round,
    tt_scale,
    tt_to_full,
    tt_zero,
)
from .kron import (
    KronTerm,
    KroneckerSumOperator,
    TriangularSplit,
    assemble_dense,
    assemble_sparse,
    complete_generator,
    kron_apply,
    operator_column_sums,
    petrov_galerkin,
    to_tt_matrix,
    triangular_split,
)
from .models import (
    KanbanParams,
    OracleSizeError,
    OverflowParams,
    build_kanban,
    build_overflow,
    oracle_generator,
    oracle_stationary,
    sparse_stationary,
)
from .hierarchy import (
    GridHierarchy,
    GridLevel,
    TransferPair,
    build_hierarchy,
)
from .solver import (
    CycleRecord,
    SolveReport,
    SolverConfig,
    SolverError,
    bootstrap_initial_guess,
    residual_norm,
    solve_stationary,
)

__all__ = [
    "EXACT",
    "TTMatrix",
    "TTVector",
    "TruncationPolicy",
    "tt_add",
    "tt_apply_modewise",
    "tt_dot",
    "tt_effective_rank",
    "tt_from_elementary",
    "tt_from_full",
    "tt_matvec",
    "tt_norm",
    "tt_ones",
    "tt_round",
    "tt_scale",
    "tt_to_full",
    "tt_zero",
    "KronTerm",
    "KroneckerSumOperator",
    "TriangularSplit",
    "assemble_dense",
    "assemble_sparse",
    "complete_generator",
    "kron_apply",
    "operator_column_sums",
    "petrov_galerkin",
    "to_tt_matrix",
    "triangular_split",
    "KanbanParams",
    "OracleSizeError",
    "OverflowParams",
    "build_kanban",
    "build_overflow",
    "oracle_generator",
    "oracle_stationary",
    "sparse_stationary",
    "GridHierarchy",
    "GridLevel",
    "TransferPair",
    "build_hierarchy",
    "CycleRecord",
    "SolveReport",
    "SolverConfig",
    "SolverError",
    "bootstrap_initial_guess",
    "residual_norm",
    "solve_stationary",
]
