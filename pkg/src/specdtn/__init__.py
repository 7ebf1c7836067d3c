"""Multidomain spectral collocation direct solver.

Variable-coefficient elliptic boundary value problems with body loads are
discretized on a hierarchy of rectangular boxes, each carrying a local
Chebyshev tensor grid and a Gauss-Legendre boundary skeleton. A build stage
sweeps the tree once, turning leaf collocation solves into boundary
(Dirichlet-to-flux) operators and merging siblings by eliminating their
shared interface; the resulting factorization is then reused across
arbitrarily many solves, which makes it a natural engine for implicit time
stepping. Local mesh refinement with 2:1 interface interpolation and
union-of-rectangle domains are supported.
"""

from .geometry import (
    Rect,
    MeshSpec,
    RefinementSpec,
    DomainTree,
    build_uniform_tree,
    build_forest,
    build_mesh,
    refine_near_point,
    enumerate_gauss_nodes,
    classify_edges,
)
from .model import CoefficientField, ProblemSpec, catalog
from .solver import FactorizedSolver, SolveState, build_stage, solve
from .timestepping import ParabolicProblem, TimeStepConfig, cn_elliptic_spec, cn_run
from .reference import ReferenceSolution, compute_reference, linf_error
from .archive import persist_operators, load_operators
from .experiments import ExperimentConfig, ResultRow, run_experiment

__version__ = "0.1.0"

__all__ = [
    "Rect",
    "MeshSpec",
    "RefinementSpec",
    "DomainTree",
    "build_uniform_tree",
    "build_forest",
    "build_mesh",
    "refine_near_point",
    "enumerate_gauss_nodes",
    "classify_edges",
    "CoefficientField",
    "ProblemSpec",
    "catalog",
    "FactorizedSolver",
    "SolveState",
    "build_stage",
    "solve",
    "ParabolicProblem",
    "TimeStepConfig",
    "cn_elliptic_spec",
    "cn_run",
    "ReferenceSolution",
    "compute_reference",
    "linf_error",
    "persist_operators",
    "load_operators",
    "ExperimentConfig",
    "ResultRow",
    "run_experiment",
    "__version__",
]
