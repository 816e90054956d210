//! Radial solver and verification suite for semiclassical nonlinear
//! Schrödinger equations -eps^2 Delta u + V u = K u^p with fast-decaying or
//! compactly supported potentials.

pub mod barriers;
pub mod error;
pub mod grids;
pub mod groundstate;
pub mod penalization;
pub mod problem;
pub mod solver;
pub mod verify;

pub use barriers::{
    barrier_w_eps, comparison_check, minimal_solution_w, subsolution_residual, supersolution_w,
    BarrierFamily, ComparisonReport, SupersolutionPoint,
};
pub use error::{Error, Result};
pub use verify::{
    check_solves_original, concentration_diagnostics, decay_envelope_fit, loglog_slope,
    rescaled_error, tail_lower_bound, threshold_bisection, DecayVariant, EnvelopeFit,
    SolvesOriginalReport, SweepDiagnostics, SweepRow, TailReport,
};
pub use groundstate::{
    check_exponential_decay, compute_ground_state, ground_state_on_grid, limit_energy,
    mp_exponent, GroundState,
};
pub use grids::{
    angular_factor, apply_operator, build_grid, norm_eps, FarFieldBc, Geometry, QuadraticFormReport, RadialField,
    RadialGrid, Tridiag,
};
pub use penalization::{
    big_g_eps, g_eps, g_eps_slope, hardy_potential, select_params, switch_height,
    verify_g_properties,
    GPropertiesReport, PenalizationParams,
};
pub use solver::{
    functional_j, mountain_pass_level_estimate, nehari_project, residual, solve_least_energy,
    SolveReport,
};
pub use problem::{
    admissible_p_range, check_assumption_a, check_assumption_k, eval_concentration,
    AssumptionAReport, AssumptionKReport, DomainLambda, Potential, ProblemSpec,
};
