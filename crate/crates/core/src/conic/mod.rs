//! Conic programs over PSD and nonnegative cones, and an interior-point
//! solver for them.

mod ipm;
mod program;

pub use ipm::{InteriorPointSolver, TOLERANCE_ENV};
pub use program::{ConicProgram, ConicSolver, MatExpr, SolverOutcome, SolverStatus, SymVar};
