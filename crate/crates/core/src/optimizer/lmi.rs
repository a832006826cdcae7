//! LMI programs for the H2 bound and the linearized weight subproblem.
//!
//! The bilinear inequality is posed in rescaled coordinates: with
//! `Q_hat = delta_hat * Q`, `mu = mu_k + sqrt(delta_hat) * nu` and the
//! constant congruence returned by [`conditioning_congruence`], the
//! linearized inequality at `mu_k` becomes
//!
//! ```text
//! [[Q A_k + A_k^T Q,  Q B_e,  sqrt(d) Q E + A_r(nu)^T],
//!  [B_e^T Q,          -I,     0                     ],
//!  [sqrt(d) E^T Q + A_r(nu),  0,  -I                ]]  ≺ 0
//! ```
//!
//! with `A_k = A_e(mu_k)`. All of its entries are of order one, while the
//! unscaled form mixes terms of order one that cancel with terms of order
//! `delta_hat`.
//!
//! The Lyapunov variable is further written as `Q = L^-T Q' L^-1`, where
//! `L L^T` is the augmented controllability Gramian at a reference point
//! (see [`StateScaling`]). The optimal `Q'` is then close to the identity,
//! which keeps the interior-point iterations well conditioned on weakly
//! controllable instances.

use nalgebra::{DMatrix, DVector};

use super::problem::WeightingProblem;
use crate::conic::{ConicProgram, ConicSolver, MatExpr, SolverOutcome, SolverStatus, SymVar};
use crate::error::{Error, Result};

/// Margin per unit of block dimension used for the strict inequalities.
pub const MARGIN_PER_DIM: f64 = 1e-7;

fn margin(dim: usize) -> f64 {
    MARGIN_PER_DIM * dim as f64
}

/// Change of state coordinates `x = L x'` applied to every program.
#[derive(Debug, Clone)]
pub struct StateScaling {
    l: DMatrix<f64>,
    l_inv: DMatrix<f64>,
}

impl StateScaling {
    /// Gramian eigenvalues are floored at this fraction of the largest one.
    const FLOOR: f64 = 1e-10;

    pub fn identity(dim: usize) -> Self {
        Self {
            l: DMatrix::identity(dim, dim),
            l_inv: DMatrix::identity(dim, dim),
        }
    }

    /// `L = V sqrt(S)` from `X = V S V^T`, with small eigenvalues floored.
    pub fn from_gramian(x: &DMatrix<f64>) -> Self {
        let dim = x.nrows();
        let eig = x.clone().symmetric_eigen();
        let top = eig.eigenvalues.amax();
        if !(top > 0.0 && top.is_finite()) {
            return Self::identity(dim);
        }
        let s = eig.eigenvalues.map(|v| v.max(Self::FLOOR * top).sqrt());
        let v = &eig.eigenvectors;
        let l = v * DMatrix::from_diagonal(&s);
        let l_inv = DMatrix::from_diagonal(&s.map(|x| 1.0 / x)) * v.transpose();
        Self { l, l_inv }
    }

    /// Scaling from the augmented Gramian at `weights`; falls back to the
    /// identity when the Gramian is unavailable.
    pub fn at(prob: &WeightingProblem, weights: &DVector<f64>, delta_hat: f64) -> Self {
        match prob.augmented_gramian(weights, delta_hat) {
            Ok(x) => Self::from_gramian(&x),
            Err(_) => Self::identity(prob.dim()),
        }
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `Q = L^-T Q' L^-1`.
    pub fn unscale(&self, q_scaled: &DMatrix<f64>) -> DMatrix<f64> {
        let q = self.l_inv.transpose() * q_scaled * &self.l_inv;
        (&q + q.transpose()) * 0.5
    }
}

/// `sum_j nu_j A_r(e_j)` as an affine expression in the variables `nu`.
fn a_r_expr(prob: &WeightingProblem, nu: &[usize]) -> MatExpr {
    let nn = prob.dim();
    let mut out = MatExpr::zeros(nn, nn);
    for (j, &v) in nu.iter().enumerate() {
        let mut e = DVector::zeros(prob.dim_mu());
        e[j] = 1.0;
        out = out + MatExpr::var_scaled(v, prob.a_r_bar(&prob.weights(&e)));
    }
    out
}

/// Left-hand side of the rescaled bilinear inequality (to be made
/// negative definite).
fn riccati_block(
    prob: &WeightingProblem,
    q: &SymVar,
    a_k: &DMatrix<f64>,
    coupling: MatExpr,
    delta_hat: f64,
    scaling: &StateScaling,
) -> MatExpr {
    let (nn, p) = (prob.dim(), prob.num_inputs());
    let (l, l_inv) = (&scaling.l, &scaling.l_inv);
    let qe = q.expr();
    let qa = qe.rmul(&(l_inv * a_k * l));
    let qb = qe.rmul(&(l_inv * prob.b_e()));
    let q13 = qe.rmul(&(l_inv * prob.e_matrix())).scale(delta_hat.sqrt()) + coupling.rmul(l).transpose();
    MatExpr::blocks(&[
        vec![qa.clone() + qa.transpose(), qb.clone(), q13.clone()],
        vec![qb.transpose(), MatExpr::constant(-DMatrix::identity(p, p)), MatExpr::zeros(p, nn)],
        vec![q13.transpose(), MatExpr::zeros(nn, p), MatExpr::constant(-DMatrix::identity(nn, nn))],
    ])
}

/// `[[Q, C_e^T], [C_e, R]]`.
fn output_block(prob: &WeightingProblem, q: &SymVar, r: &SymVar, scaling: &StateScaling) -> MatExpr {
    let c = prob.c_e() * &scaling.l;
    MatExpr::blocks(&[
        vec![q.expr(), MatExpr::constant(c.transpose())],
        vec![MatExpr::constant(c), r.expr()],
    ])
}

fn identity_times(var: usize, k: usize) -> MatExpr {
    MatExpr::var_scaled(var, DMatrix::identity(k, k))
}

/// The linearized inequality exactly as stated, `psi(Q_hat, delta_hat) +
/// phi(mu_k) + Dphi(mu_k)[mu - mu_k]`, evaluated numerically.
pub fn literal_linearized_lmi(
    prob: &WeightingProblem,
    q_hat: &DMatrix<f64>,
    delta_hat: f64,
    mu_k: &DVector<f64>,
    mu: &DVector<f64>,
) -> DMatrix<f64> {
    prob.psi_map(q_hat, delta_hat) + prob.phi_map(mu_k) + prob.dphi(mu_k, &(mu - mu_k))
}

/// Constant matrix `C` with `C^T (literal form at Q_hat = delta_hat Q) C` equal
/// to the rescaled form used by the programs.
pub fn conditioning_congruence(
    prob: &WeightingProblem,
    mu_k: &DVector<f64>,
    delta_hat: f64,
    scaling: &StateScaling,
) -> DMatrix<f64> {
    let (nn, p) = (prob.dim(), prob.num_inputs());
    let size = 2 * nn + p;
    let mut t = DMatrix::identity(size, size);
    t.view_mut((nn + p, 0), (nn, nn))
        .copy_from(&prob.a_r_bar(&prob.weights(mu_k)));
    let s = 1.0 / delta_hat.sqrt();
    let mut d = DMatrix::identity(size, size);
    for i in 0..nn + p {
        d[(i, i)] = s;
    }
    let mut sc = DMatrix::identity(size, size);
    sc.view_mut((0, 0), (nn, nn)).copy_from(&scaling.l);
    t * d * sc
}

/// A weight-optimization program with handles to its variables.
#[derive(Debug, Clone)]
pub struct WeightProgram {
    pub program: ConicProgram,
    pub q: SymVar,
    pub r: SymVar,
    /// Step variables; empty for fixed-weight programs.
    pub nu: Vec<usize>,
    pub mu_k: DVector<f64>,
    pub delta_hat: f64,
    pub scaling: StateScaling,
}

impl WeightProgram {
    pub fn mu(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut mu = self.mu_k.clone();
        let s = self.delta_hat.sqrt();
        for (j, &v) in self.nu.iter().enumerate() {
            mu[j] += s * x[v];
        }
        mu
    }

    /// `R` from the solution; `R_hat = delta_hat * R`.
    pub fn r_value(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.r.value(x)
    }

    /// `Q_hat = delta_hat * Q`, in the original coordinates.
    pub fn q_hat_value(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.scaling.unscale(&self.q.value(x)) * self.delta_hat
    }
}

fn base_program(
    prob: &WeightingProblem,
    mu_k: &DVector<f64>,
    delta_hat: f64,
    with_step: bool,
    scaling: &StateScaling,
) -> (ConicProgram, SymVar, SymVar, Vec<usize>) {
    let mut program = ConicProgram::new();
    let q = program.add_sym_var(prob.dim());
    let r = program.add_sym_var(prob.num_outputs());
    let nu = if with_step {
        program.add_vars(prob.dim_mu())
    } else {
        Vec::new()
    };
    let a_k = prob.a_e(&prob.weights(mu_k));
    let coupling = if with_step {
        a_r_expr(prob, &nu)
    } else {
        MatExpr::zeros(prob.dim(), prob.dim())
    };
    let b2 = riccati_block(prob, &q, &a_k, coupling, delta_hat, scaling);
    let d2 = b2.shape().0;
    let b1 = output_block(prob, &q, &r, scaling);
    let d1 = b1.shape().0;
    program
        .add_psd(b1 + DMatrix::identity(d1, d1) * -margin(d1))
        .expect("output block is symmetric");
    program
        .add_psd(-b2 + DMatrix::identity(d2, d2) * -margin(d2))
        .expect("Riccati block is symmetric");
    program.minimize(&r.expr().trace());
    (program, q, r, nu)
}

/// Minimum of `tr(R)` at fixed weights `T mu`, scaled at `mu`.
pub fn fixed_weight_program(prob: &WeightingProblem, mu: &DVector<f64>, delta_hat: f64) -> WeightProgram {
    let scaling = StateScaling::at(prob, &prob.weights(mu), delta_hat);
    fixed_weight_program_scaled(prob, mu, delta_hat, scaling)
}

pub fn fixed_weight_program_scaled(
    prob: &WeightingProblem,
    mu: &DVector<f64>,
    delta_hat: f64,
    scaling: StateScaling,
) -> WeightProgram {
    let (program, q, r, nu) = base_program(prob, mu, delta_hat, false, &scaling);
    WeightProgram {
        program,
        q,
        r,
        nu,
        mu_k: mu.clone(),
        delta_hat,
        scaling,
    }
}

/// Convex subproblem at `mu_k`: minimize `tr(R)` subject to the output
/// block, the linearized bilinear inequality and `T mu >= w_min`.
pub fn linearized_subproblem(prob: &WeightingProblem, mu_k: &DVector<f64>, delta_hat: f64, w_min: f64) -> WeightProgram {
    let scaling = StateScaling::at(prob, &prob.weights(mu_k), delta_hat);
    linearized_subproblem_scaled(prob, mu_k, delta_hat, w_min, scaling)
}

/// As [`linearized_subproblem`] in given coordinates. Programs that share a
/// scaling have nested feasible sets along a run.
pub fn linearized_subproblem_scaled(
    prob: &WeightingProblem,
    mu_k: &DVector<f64>,
    delta_hat: f64,
    w_min: f64,
    scaling: StateScaling,
) -> WeightProgram {
    let (mut program, q, r, nu) = base_program(prob, mu_k, delta_hat, true, &scaling);
    if !nu.is_empty() {
        let t = &prob.param.lift;
        let floor = t * mu_k - DVector::repeat(t.nrows(), w_min);
        let rows = MatExpr::vector(&nu).lmul(&(t * delta_hat.sqrt())) + DMatrix::from_column_slice(floor.len(), 1, floor.as_slice());
        program.add_nonneg(rows);
    }
    WeightProgram {
        program,
        q,
        r,
        nu,
        mu_k: mu_k.clone(),
        delta_hat,
        scaling,
    }
}

/// Result of a feasibility test: the largest uniform slack `t` that can be
/// added to all constraints. The strict inequalities hold iff `t > 0`.
#[derive(Debug, Clone)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    pub margin: f64,
    pub outcome: SolverOutcome,
}

fn verdict(program: &ConicProgram, t: usize, solver: &dyn ConicSolver) -> Result<FeasibilityVerdict> {
    let outcome = solver.solve(program);
    if outcome.status != SolverStatus::Optimal {
        return Err(Error::Solver(format!("feasibility test failed: {}", outcome.diagnostics)));
    }
    let margin = outcome.x.as_ref().expect("optimal outcome has a point")[t];
    Ok(FeasibilityVerdict {
        feasible: margin > 0.0,
        margin,
        outcome,
    })
}

/// Whether some `Q_hat ≻ 0`, `R_hat ≻ 0` satisfy the bilinear inequality, the
/// output inequality and `tr(R_hat) < gamma_hat` at the given weights.
pub fn augmented_h2_feasible(
    prob: &WeightingProblem,
    weights: &DVector<f64>,
    gamma_hat: f64,
    delta_hat: f64,
    solver: &dyn ConicSolver,
) -> Result<FeasibilityVerdict> {
    if !(delta_hat > 0.0) {
        return Err(Error::Config(format!("delta_hat must be positive, got {delta_hat}")));
    }
    prob.quotient.check_admissible(weights, 1e-9)?;
    let mu = prob.param.mu_from_weights(weights, 1e-9)?;
    let mut program = ConicProgram::new();
    let q = program.add_sym_var(prob.dim());
    let r = program.add_sym_var(prob.num_outputs());
    let t = program.add_var();
    let w = prob.weights(&mu);
    let scaling = StateScaling::at(prob, &w, delta_hat);
    let a_k = prob.a_e(&w);
    let b2 = riccati_block(prob, &q, &a_k, MatExpr::zeros(prob.dim(), prob.dim()), delta_hat, &scaling);
    let b1 = output_block(prob, &q, &r, &scaling);
    let (d1, d2) = (b1.shape().0, b2.shape().0);
    program.add_psd(b1 - identity_times(t, d1) + DMatrix::identity(d1, d1) * -margin(d1))?;
    program.add_psd(-b2 - identity_times(t, d2) + DMatrix::identity(d2, d2) * -margin(d2))?;
    // tr(R_hat) < gamma_hat  <=>  tr(R) < gamma_hat / delta_hat.
    program.add_nonneg(-r.expr().trace() - MatExpr::var(t) + DMatrix::from_element(1, 1, gamma_hat / delta_hat));
    program.minimize(&-MatExpr::var(t));
    verdict(&program, t, solver)
}

/// The classical H2 characterization in `Q`, `R`: `[[Q A_e + A_e^T Q, Q B_e],
/// [B_e^T Q, -I]] ≺ 0`, `[[Q, C_e^T], [C_e, R]] ≻ 0`, `tr(R) < gamma`.
pub fn standard_h2_feasible(
    prob: &WeightingProblem,
    weights: &DVector<f64>,
    gamma: f64,
    solver: &dyn ConicSolver,
) -> Result<FeasibilityVerdict> {
    prob.quotient.check_admissible(weights, 1e-9)?;
    let (nn, p) = (prob.dim(), prob.num_inputs());
    let mut program = ConicProgram::new();
    let q = program.add_sym_var(nn);
    let r = program.add_sym_var(prob.num_outputs());
    let t = program.add_var();
    let scaling = match prob.augmented_gramian(weights, 0.0) {
        Ok(x) => StateScaling::from_gramian(&x),
        Err(_) => StateScaling::identity(nn),
    };
    let (l, l_inv) = (&scaling.l, &scaling.l_inv);
    let a = prob.a_e(weights);
    let qa = q.expr().rmul(&(l_inv * a * l));
    let qb = q.expr().rmul(&(l_inv * prob.b_e()));
    let b2 = MatExpr::blocks(&[
        vec![qa.clone() + qa.transpose(), qb.clone()],
        vec![qb.transpose(), MatExpr::constant(-DMatrix::identity(p, p))],
    ]);
    let b1 = output_block(prob, &q, &r, &scaling);
    let (d1, d2) = (b1.shape().0, b2.shape().0);
    program.add_psd(b1 - identity_times(t, d1) + DMatrix::identity(d1, d1) * -margin(d1))?;
    program.add_psd(-b2 - identity_times(t, d2) + DMatrix::identity(d2, d2) * -margin(d2))?;
    program.add_nonneg(-r.expr().trace() - MatExpr::var(t) + DMatrix::from_element(1, 1, gamma));
    program.minimize(&-MatExpr::var(t));
    verdict(&program, t, solver)
}

/// Smallest feasible `gamma_hat` of [`augmented_h2_feasible`], by bisection to
/// relative width `rel_tol`.
pub fn bisect_gamma_hat(
    prob: &WeightingProblem,
    weights: &DVector<f64>,
    delta_hat: f64,
    rel_tol: f64,
    solver: &dyn ConicSolver,
) -> Result<f64> {
    let feasible = |g: f64| augmented_h2_feasible(prob, weights, g, delta_hat, solver).map(|v| v.feasible);
    let mut hi = delta_hat;
    let mut lo;
    if feasible(hi)? {
        lo = hi / 4.0;
        while feasible(lo)? {
            hi = lo;
            lo /= 4.0;
            if lo < delta_hat * 1e-14 {
                return Ok(hi);
            }
        }
    } else {
        lo = hi;
        hi *= 4.0;
        while !feasible(hi)? {
            lo = hi;
            hi *= 4.0;
            if hi > delta_hat * 1e14 {
                return Err(Error::Numerical("no feasible gamma_hat found".into()));
            }
        }
    }
    while hi - lo > rel_tol * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
