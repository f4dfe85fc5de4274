"""Approximate subspace-sparse recovery from corrupted data.

Geometry of unions of subspaces, certified l1 solvers, a seeded data
generator and Monte Carlo checks of the recovery guarantees.
"""

__version__ = "0.1.0"

from .datagen import Dataset, NoiseParams, Query, gen_query, generate
from .estimators import LassoCoder, SubspaceSparseCoder
from .exceptions import (
    ConfigError,
    FormatError,
    HypothesisNotMet,
    InfeasibleProblem,
    NecessaryConditionViolated,
    SubsparseError,
)
from .geometry import GeometryReport, Subspace, incoherence, inradius, orthonormalize, principal_angles, recovery_margin
from .solver import SolveResult, SolverOptions, Status, solve_constrained_l1, solve_equality_l1, solve_lasso
from .verify import BoundParams, compute_beta, compute_bounds, compute_gamma

__all__ = [
    "BoundParams",
    "ConfigError",
    "Dataset",
    "FormatError",
    "GeometryReport",
    "HypothesisNotMet",
    "InfeasibleProblem",
    "LassoCoder",
    "NecessaryConditionViolated",
    "NoiseParams",
    "Query",
    "SolveResult",
    "SolverOptions",
    "SubspaceSparseCoder",
    "Status",
    "Subspace",
    "SubsparseError",
    "compute_beta",
    "compute_bounds",
    "compute_gamma",
    "gen_query",
    "generate",
    "incoherence",
    "inradius",
    "orthonormalize",
    "principal_angles",
    "recovery_margin",
    "solve_constrained_l1",
    "solve_equality_l1",
    "solve_lasso",
]
