//! Optimization of the reduced graph's edge weights against the H2 norm of
//! the reduction error.

mod iterate;
mod lmi;
mod problem;

pub use iterate::{
    optimize_weights, IterationRecord, IterationTrace, OptimizationResult, OptimizerSettings, Termination,
    OBJECTIVE_SLACK,
};
pub use lmi::{
    bisect_gamma_hat, conditioning_congruence, fixed_weight_program, fixed_weight_program_scaled,
    linearized_subproblem, linearized_subproblem_scaled, literal_linearized_lmi, standard_h2_feasible,
    augmented_h2_feasible, FeasibilityVerdict, StateScaling, WeightProgram, MARGIN_PER_DIM,
};
pub use problem::WeightingProblem;
