"""
Reduced-order models for mixed-form elasticity that keep the discrete balance
of linear and angular momentum exact.

The stress lives in a BDM1 space with weakly imposed symmetry. A spanning
forest of the dual mesh graph gives a right-inverse ``S_I`` of the constraint
operator ``B``, so any prediction can be split into a particular part
``S_I f`` and a homogeneous part in ker B.
"""

from .cases import CaseConfig, Problem, default_config
from .fem import BoundarySpec, Discretization, HenckyVonMises, Hooke
from .fom import SolutionTriplet, SolverError, solve_hencky, solve_linear
from .mesh import Mesh, build_dual_graph, build_structured_unit_square
from .pod import PodBasis, compute_pod
from .rom import (
    STRATEGIES, EvalReport, RomModel, evaluate, load_model, predict_stress, save_model,
    train_strategy,
)
from .tree import SpanningForest, TreeSolver, build_forest

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec", "CaseConfig", "Discretization", "EvalReport", "HenckyVonMises", "Hooke",
    "Mesh", "PodBasis", "Problem", "RomModel", "STRATEGIES", "SolutionTriplet", "SolverError",
    "SpanningForest", "TreeSolver", "build_dual_graph", "build_forest",
    "build_structured_unit_square", "compute_pod", "default_config", "evaluate", "load_model",
    "predict_stress", "save_model", "solve_hencky", "solve_linear", "train_strategy",
]
