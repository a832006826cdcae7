use std::time::{Duration, Instant};

use log::{debug, warn};
use nalgebra::DVector;

use super::lmi::{fixed_weight_program_scaled, linearized_subproblem_scaled, StateScaling};
use super::problem::WeightingProblem;
use crate::conic::{ConicSolver, SolverStatus};
use crate::error::{Error, Result};

/// Largest objective increase attributed to solver accuracy.
pub const OBJECTIVE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub delta_hat: f64,
    /// Stop once consecutive objectives differ by at most this much.
    pub tol: f64,
    /// Upper bound on the trace length, including the initial point.
    pub max_iter: usize,
    /// Lower bound on every quotient weight; `None` means `1e-6 * max(w0)`.
    pub w_min: Option<f64>,
    /// Keep iterating on a flat objective while the true error still drops
    /// by more than `10 * tol`.
    pub continue_on_flat_objective: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            delta_hat: 1e-5,
            tol: 1e-5,
            max_iter: 200,
            w_min: None,
            continue_on_flat_objective: false,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_hat > 0.0 && self.delta_hat.is_finite()) {
            return Err(Error::Config(format!("delta_hat must be positive, got {}", self.delta_hat)));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tolerance must be nonnegative, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if let Some(w) = self.w_min {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("w_min must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub mu: DVector<f64>,
    pub weights: DVector<f64>,
    /// `tr(R)` of the program solved at this step.
    pub objective: f64,
    /// H2 norm of the reduction error at `weights`, from the Lyapunov oracle.
    pub h2_error: f64,
    pub status: SolverStatus,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No free weights (a single cluster, or a quotient that is a cycle).
    NothingToOptimize,
    /// A subproblem failed; the last feasible iterate is returned.
    SubproblemFailed(String),
    /// The solver returned a larger objective than the previous step, which
    /// the exact subproblem cannot do; the previous iterate is kept.
    ObjectiveIncreased { previous: f64, rejected: f64 },
}

impl Termination {
    pub fn is_warning(&self) -> bool {
        matches!(self, Termination::SubproblemFailed(_) | Termination::ObjectiveIncreased { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    /// Coordinates of the returned weights: the iterate of the trace with the
    /// smallest oracle error (the earliest one on ties).
    pub mu: DVector<f64>,
    pub weights: DVector<f64>,
    pub trace: IterationTrace,
    pub termination: Termination,
    pub initial_error: f64,
    pub final_error: f64,
    /// Index into the trace of the returned iterate.
    pub best_iteration: usize,
}

impl OptimizationResult {
    /// `(initial - final) / initial` of the oracle H2 errors.
    pub fn improvement(&self) -> f64 {
        if self.initial_error == 0.0 {
            0.0
        } else {
            (self.initial_error - self.final_error) / self.initial_error
        }
    }
}

/// Iterative edge weighting: solves the linearized subproblem at the
/// current point until the objective stalls.
pub fn optimize_weights(
    prob: &WeightingProblem,
    mu0: Option<&DVector<f64>>,
    settings: &OptimizerSettings,
    solver: &dyn ConicSolver,
) -> Result<OptimizationResult> {
    settings.validate()?;
    let start = Instant::now();
    let mu0 = match mu0 {
        Some(mu) => {
            prob.check_mu(mu)?;
            mu.clone()
        }
        None => prob.initial_mu()?,
    };
    let w0 = prob.weights(&mu0);
    prob.quotient.check_admissible(&w0, 1e-9)?;
    let w_min = settings.w_min.unwrap_or_else(|| 1e-6 * w0.max());
    if prob.dim_mu() > 0 && w0.min() < w_min {
        return Err(Error::Config(format!(
            "w_min = {w_min} exceeds the smallest initial weight {}",
            w0.min()
        )));
    }
    let initial_error = prob.oracle_h2(&w0)?;

    // One set of coordinates for the whole run keeps consecutive programs
    // nested, so the objective cannot increase beyond solver accuracy.
    let mut scaling = StateScaling::at(prob, &w0, settings.delta_hat);
    let mut trace = IterationTrace::default();
    let (f0, status0) = if prob.dim_mu() == 0 {
        (initial_error * initial_error, SolverStatus::Optimal)
    } else {
        let out = solver.solve(&fixed_weight_program_scaled(prob, &mu0, settings.delta_hat, scaling.clone()).program);
        match out.objective {
            Some(f) => (f, out.status),
            None => {
                return Err(Error::Solver(format!(
                    "fixed-weight program at the initial point: {}",
                    out.diagnostics
                )))
            }
        }
    };
    trace.records.push(IterationRecord {
        k: 0,
        mu: mu0.clone(),
        weights: w0.clone(),
        objective: f0,
        h2_error: initial_error,
        status: status0,
        elapsed: start.elapsed(),
    });
    if prob.dim_mu() == 0 {
        return Ok(OptimizationResult {
            mu: mu0,
            weights: w0,
            trace,
            termination: Termination::NothingToOptimize,
            initial_error,
            final_error: initial_error,
            best_iteration: 0,
        });
    }

    let mut mu = mu0;
    let mut f_prev = f0;
    let mut err_prev = initial_error;
    let termination = loop {
        if trace.len() >= settings.max_iter {
            break Termination::MaxIterations;
        }
        let k = trace.len();
        let mut sub = linearized_subproblem_scaled(prob, &mu, settings.delta_hat, w_min, scaling.clone());
        let mut out = solver.solve(&sub.program);
        if out.status == SolverStatus::NumericalFailure {
            // The weights may have drifted far from where the coordinates
            // were chosen; retry once in coordinates fitted to this point.
            debug!("subproblem {k}: {}; rescaling", out.diagnostics);
            scaling = StateScaling::at(prob, &prob.weights(&mu), settings.delta_hat);
            sub = linearized_subproblem_scaled(prob, &mu, settings.delta_hat, w_min, scaling.clone());
            out = solver.solve(&sub.program);
        }
        let (x, f) = match (&out.x, out.objective) {
            (Some(x), Some(f)) if out.status == SolverStatus::Optimal => (x, f),
            _ => {
                if k == 1 && out.status == SolverStatus::Infeasible {
                    return Err(Error::Config(format!(
                        "linearized subproblem is infeasible at the initial point (w_min = {w_min}): {}",
                        out.diagnostics
                    )));
                }
                warn!("subproblem {k} failed: {}", out.diagnostics);
                break Termination::SubproblemFailed(out.diagnostics.clone());
            }
        };
        if f > f_prev + OBJECTIVE_SLACK {
            warn!("subproblem {k} raised the objective from {f_prev} to {f}; stopping");
            break Termination::ObjectiveIncreased {
                previous: f_prev,
                rejected: f,
            };
        }
        let mu_next = sub.mu(x);
        let w_next = prob.weights(&mu_next);
        let err = match prob.oracle_h2(&w_next) {
            Ok(e) => e,
            Err(e) => {
                warn!("oracle failed at iterate {k}: {e}");
                break Termination::SubproblemFailed(e.to_string());
            }
        };
        debug!("iteration {k}: tr(R) = {f:.12e}, H2 error = {err:.12e}");
        trace.records.push(IterationRecord {
            k,
            mu: mu_next.clone(),
            weights: w_next,
            objective: f,
            h2_error: err,
            status: out.status,
            elapsed: start.elapsed(),
        });
        mu = mu_next;
        let flat = (f_prev - f).abs() <= settings.tol;
        let still_improving = err_prev - err > 10.0 * settings.tol;
        f_prev = f;
        err_prev = err;
        if flat && !(settings.continue_on_flat_objective && still_improving) {
            break Termination::Converged;
        }
    };

    let mut best_iteration = 0;
    for (k, rec) in trace.records.iter().enumerate() {
        if rec.h2_error < trace.records[best_iteration].h2_error {
            best_iteration = k;
        }
    }
    let best = &trace.records[best_iteration];
    Ok(OptimizationResult {
        mu: best.mu.clone(),
        weights: best.weights.clone(),
        final_error: best.h2_error,
        best_iteration,
        trace,
        termination,
        initial_error,
    })
}
