"""Parallel relaxation solvers for boundary-value problems of discrete variational mechanics."""

from .core import (
    BoundaryData,
    DiscreteLagrangianModel,
    DivergedAtNode,
    DriftTooStrong,
    FunctionModel,
    InvalidArgument,
    InvalidBoundary,
    InvalidMonitor,
    Knot,
    ModelError,
    OracleError,
    QuadraticModel,
    RefinementKnotClash,
    SingularDiagonalBlock,
    SingularPotential,
    SolverConfig,
    Trajectory,
    VarintError,
    del_residual,
    del_residuals,
    discrete_action,
    free_particle_model,
    make_linear_initial_guess,
    max_residual,
)
from .diagnostics import (
    BlockTridiagonalHessian,
    ConvergenceReport,
    assemble_hessian,
    check_theorem_conditions,
    per_step_hessian,
    spectral_radius_jacobi,
)
from .solver import (
    SolveReport,
    apply_damping,
    jacobi_newton_sweep,
    jacobi_sweep,
    refine,
    solve,
    solve_with_knots,
    sundman_rescale,
    update_time_grid_zermelo,
)

__version__ = "0.1.0"
