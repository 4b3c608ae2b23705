"""Numerical laboratory for Hamilton-Jacobi homogenization on a junction line.

Random stationary media with a local perturbation at the origin, metric
problems, effective Hamiltonians, junction flux limiters, approximate
correctors, and monotone finite-difference solvers for the rescaled and
limit models.
"""

from .environment import (
    AssembledHamiltonian,
    BumpProfile,
    CutoffProfile,
    FixedRadiusSlowdown,
    MarkDistribution,
    PiecewiseLinearCore,
    QuadraticCore,
    RandomMedium,
    VelocityCurve,
    abs_core,
    assemble_eps,
    assemble_stationary,
    assemble_wfl,
    constant_medium,
    mu_star_exact,
    paper_bump,
    quadratic_core,
    sample_medium,
    sup_zero_level,
    traffic_core,
)
from .errors import (
    CFLViolation,
    ConfigError,
    InvalidLimiter,
    LevelBelowMinimum,
    LevelNotAdmissible,
    NonConvergence,
    UnresolvedScale,
)
from .metric import (
    MetricProfile,
    MetricQuery,
    metric_oracle,
    metric_profile,
    metric_value,
    reversed_metric,
    subadditivity_check,
)
from .effective import (
    CorrectorResult,
    CorrectorSlopeReport,
    EffectiveHamiltonian,
    FluxLimiterEstimate,
    build_effective,
    corrector_slopes,
    corrector_solve,
    default_mu_grid,
    deterministic_limiter,
    flux_limiter,
    homogenized_slopes,
    junction_slope_interval,
    mu_star,
)
from .hj_solver import (
    Grid1D,
    SolutionField,
    numerical_flux,
    piecewise_linear_data,
    solve_epsilon,
    solve_limit,
)

__version__ = "0.1.0"
