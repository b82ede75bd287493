"""Multigrid Newton solver for Gross-Pitaevskii-type eigenvalue problems.

Finite-element discretization on Kuhn-triangulated boxes (P1/P2), damped
self-consistent-field coarse solves, one-Newton-step-per-level multigrid,
and an adaptively damped (mixing) variant with guaranteed per-step
residual decrease.
"""

from .assembly import (
    FemSpace,
    FieldCoeffs,
    Operators,
    assemble_mass,
    assemble_stiffness,
    assemble_weighted_mass,
    energy,
    h1_norm,
    l2_norm,
    prolongate,
    prolongation_matrix,
    residual_F,
)
from .config import RunConfig, load_config
from .eigsolve import ScfConfig, scf_solve, smallest_eigpair
from .elements import quadrature, reference_element
from .errors import (
    CoercivityError,
    ConfigurationError,
    DivergenceError,
    GpmgError,
    NonConvergenceError,
    ResourceLimitError,
    SolverError,
    StagnationError,
    UsageError,
)
from .expr import Expr, evaluate, parse
from .linsolve import BorderedSystem, SolverConfig, solve_bordered, solve_spd
from .mesh import (
    BoxDomain,
    MeshHierarchy,
    MeshLevel,
    build_hierarchy,
    build_initial_mesh,
    refine_uniform,
)
from .newton import (
    MixingParams,
    assemble_newton_system,
    build_contexts,
    mixing_iteration,
    multigrid_mixing,
    multigrid_newton,
    newton_fixed_space,
    newton_iteration,
    resi,
)
from .nonlinearity import Nonlinearity, check_assumptions
from .state import IterateX, RunTrace, TraceRow

__version__ = "0.1.0"
