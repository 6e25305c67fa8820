"""qmoment: q-moment measure representations via maximal-correlation transport.

Given a centered, full-dimensional discrete probability measure mu on R^n
and an exponent q > 0, the solver finds a positive convex potential
phi = u - c and density rho = phi^{-(n+q)} whose gradient map pushes rho
forward to mu, by minimizing the objective J(rho) = F(rho) + T(rho, mu)
over probability densities on a truncated grid.
"""

from .errors import (
    DomainError,
    EmptyCellWarning,
    HyperplaneSupportedError,
    MassUnreachableError,
    NonconvergenceError,
    NonzeroBarycenterError,
    NotConvergedError,
    OriginOutsideError,
    QMomentError,
    SizeExceededError,
    UnsupportedDimensionError,
    ValidationError,
    WrongExponentError,
)
from .measures import (
    DiscreteMeasure,
    GridDensity,
    GridSpec,
    PiecewiseAffinePotential,
    ProblemSpec,
    SolverOptions,
    TransportPlan,
    ValidationReport,
    auto_center,
    default_grid,
    validate,
)
from .functionals import (
    FunctionalValues,
    delta_window,
    eval_F,
    f,
    f_prime,
    f_star,
    lower_bound_F,
    lower_bound_constant,
)
from .transport import (
    DualSolveResult,
    enumerate_max_correlation,
    eval_T,
    grid_density_to_discrete,
    lp_max_correlation,
    map_assignment,
    quantile_correlation_1d,
    semi_discrete_dual,
)
from .solver import (
    SolveReport,
    density_update,
    export_solution,
    load_solution,
    normalize_c,
    solve,
)
from .verification import (
    VerificationReport,
    c_mu,
    check_b1,
    check_t_lower_bound,
    displacement_convexity_probe,
    optimality_residual,
    verification_report,
)
from .hemisphere import (
    Polygon2D,
    SurfaceMesh,
    anchor_diagnostics,
    build_surface,
    export_mesh,
    polar_body,
)

__version__ = "0.1.0"
