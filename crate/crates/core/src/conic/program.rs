use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Affine matrix expression `C + sum_i x_i A_i` in the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl MatExpr {
    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn scalar(value: f64) -> Self {
        Self::constant(DMatrix::from_element(1, 1, value))
    }

    /// The 1x1 expression `x_var`.
    pub fn var(var: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(var, DMatrix::from_element(1, 1, 1.0));
        Self {
            constant: DMatrix::zeros(1, 1),
            terms,
        }
    }

    /// `x_var * m`.
    pub fn var_scaled(var: usize, m: DMatrix<f64>) -> Self {
        let mut terms = BTreeMap::new();
        let constant = DMatrix::zeros(m.nrows(), m.ncols());
        terms.insert(var, m);
        Self { constant, terms }
    }

    /// Column vector `(x_{v_0}, x_{v_1}, ...)`.
    pub fn vector(vars: &[usize]) -> Self {
        let k = vars.len();
        let mut terms = BTreeMap::new();
        for (i, &v) in vars.iter().enumerate() {
            let mut m = DMatrix::zeros(k, 1);
            m[(i, 0)] = 1.0;
            terms.insert(v, m);
        }
        Self {
            constant: DMatrix::zeros(k, 1),
            terms,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &DMatrix<f64>)> {
        self.terms.iter().map(|(&v, m)| (v, m))
    }

    pub fn coefficient(&self, var: usize) -> Option<&DMatrix<f64>> {
        self.terms.get(&var)
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(&v, m)| (v, f(m))).collect(),
        }
    }

    /// `a * self`.
    pub fn lmul(&self, a: &DMatrix<f64>) -> Self {
        self.map(|m| a * m)
    }

    /// `self * a`.
    pub fn rmul(&self, a: &DMatrix<f64>) -> Self {
        self.map(|m| m * a)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    /// `(self + self^T) / 2`.
    pub fn sym(&self) -> Self {
        self.map(|m| (m + m.transpose()) * 0.5)
    }

    /// `a^T * self * a`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Self {
        let at = a.transpose();
        self.map(|m| &at * m * a)
    }

    pub fn trace(&self) -> Self {
        self.map(|m| DMatrix::from_element(1, 1, m.trace()))
    }

    /// Substitutes `x_var = sum_k coef_k * y_k + offset` for every variable
    /// listed in `subst`.
    pub fn substitute(&self, subst: &BTreeMap<usize, (Vec<(usize, f64)>, f64)>) -> Self {
        let mut out = Self::constant(self.constant.clone());
        for (&v, m) in &self.terms {
            match subst.get(&v) {
                Some((combo, offset)) => {
                    out.constant += m * *offset;
                    for &(y, c) in combo {
                        out.add_term(y, m * c);
                    }
                }
                None => out.add_term(v, m.clone()),
            }
        }
        out
    }

    fn add_term(&mut self, var: usize, m: DMatrix<f64>) {
        match self.terms.get_mut(&var) {
            Some(existing) => *existing += m,
            None => {
                self.terms.insert(var, m);
            }
        }
    }

    /// Block matrix from a grid of expressions. Every row of the grid must
    /// have consistent heights, every column consistent widths.
    pub fn blocks(grid: &[Vec<MatExpr>]) -> Self {
        let heights: Vec<usize> = grid.iter().map(|row| row[0].shape().0).collect();
        let widths: Vec<usize> = grid[0].iter().map(|e| e.shape().1).collect();
        let (rows, cols) = (heights.iter().sum(), widths.iter().sum());
        let mut out = Self::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, e) in row.iter().enumerate() {
                assert_eq!(e.shape(), (heights[bi], widths[bj]), "block ({bi}, {bj}) has wrong shape");
                out.constant.view_mut((r0, c0), e.shape()).copy_from(&e.constant);
                for (&v, m) in &e.terms {
                    let slot = out
                        .terms
                        .entry(v)
                        .or_insert_with(|| DMatrix::zeros(rows, cols));
                    slot.view_mut((r0, c0), e.shape()).copy_from(m);
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        out
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (&v, m) in &self.terms {
            out += m * x[v];
        }
        out
    }

    /// The linear part evaluated at `x` (constant dropped).
    pub fn eval_linear(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.constant.nrows(), self.constant.ncols());
        for (&v, m) in &self.terms {
            out += m * x[v];
        }
        out
    }

    fn max_var(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }
}

impl Add for MatExpr {
    type Output = MatExpr;
    fn add(mut self, rhs: MatExpr) -> MatExpr {
        assert_eq!(self.shape(), rhs.shape(), "shape mismatch in sum");
        self.constant += rhs.constant;
        for (v, m) in rhs.terms {
            self.add_term(v, m);
        }
        self
    }
}

impl Sub for MatExpr {
    type Output = MatExpr;
    fn sub(self, rhs: MatExpr) -> MatExpr {
        self + (-rhs)
    }
}

impl Neg for MatExpr {
    type Output = MatExpr;
    fn neg(self) -> MatExpr {
        self.scale(-1.0)
    }
}

impl Add<DMatrix<f64>> for MatExpr {
    type Output = MatExpr;
    fn add(mut self, rhs: DMatrix<f64>) -> MatExpr {
        self.constant += rhs;
        self
    }
}

impl Mul<f64> for MatExpr {
    type Output = MatExpr;
    fn mul(self, rhs: f64) -> MatExpr {
        self.scale(rhs)
    }
}

/// A symmetric matrix decision variable, stored as its upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SymVar {
    dim: usize,
    /// Variable index of entry `(i, j)`, `i <= j`, in column-major packed order.
    vars: Vec<usize>,
}

impl SymVar {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn var(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.vars[j * (j + 1) / 2 + i]
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn expr(&self) -> MatExpr {
        let k = self.dim;
        let mut terms = BTreeMap::new();
        for j in 0..k {
            for i in 0..=j {
                let mut m = DMatrix::zeros(k, k);
                m[(i, j)] = 1.0;
                m[(j, i)] = 1.0;
                terms.insert(self.var(i, j), m);
            }
        }
        MatExpr {
            constant: DMatrix::zeros(k, k),
            terms,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| x[self.var(i, j)])
    }
}

/// `minimize c^T x` subject to PSD, elementwise-nonnegative and equality
/// constraints on affine expressions of `x`.
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    num_vars: usize,
    objective: Vec<(usize, f64)>,
    objective_constant: f64,
    psd: Vec<MatExpr>,
    nonneg: Vec<MatExpr>,
    eq: Vec<MatExpr>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, k: usize) -> Vec<usize> {
        (0..k).map(|_| self.add_var()).collect()
    }

    pub fn add_sym_var(&mut self, dim: usize) -> SymVar {
        let vars = self.add_vars(dim * (dim + 1) / 2);
        SymVar { dim, vars }
    }

    /// Sets the objective `minimize expr` for a 1x1 expression.
    pub fn minimize(&mut self, expr: &MatExpr) {
        assert_eq!(expr.shape(), (1, 1), "objective must be scalar");
        self.objective = expr.terms().map(|(v, m)| (v, m[(0, 0)])).collect();
        self.objective_constant = expr.constant[(0, 0)];
    }

    /// Requires `expr ⪰ 0`. The expression must be square and symmetric.
    pub fn add_psd(&mut self, expr: MatExpr) -> Result<()> {
        let (r, c) = expr.shape();
        if r != c {
            return Err(Error::Dimension(format!("PSD constraint is {r}x{c}")));
        }
        let asym = |m: &DMatrix<f64>| (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0);
        if asym(&expr.constant) || expr.terms.values().any(asym) {
            return Err(Error::Dimension("PSD constraint is not symmetric".into()));
        }
        self.psd.push(expr.sym());
        Ok(())
    }

    /// Requires every entry of the column expression to be nonnegative.
    pub fn add_nonneg(&mut self, expr: MatExpr) {
        assert_eq!(expr.shape().1, 1, "nonnegativity needs a column expression");
        self.nonneg.push(expr);
    }

    /// Requires every entry of the column expression to vanish.
    pub fn add_eq(&mut self, expr: MatExpr) {
        assert_eq!(expr.shape().1, 1, "equality needs a column expression");
        self.eq.push(expr);
    }

    pub fn psd_constraints(&self) -> &[MatExpr] {
        &self.psd
    }

    pub fn nonneg_constraints(&self) -> &[MatExpr] {
        &self.nonneg
    }

    pub fn eq_constraints(&self) -> &[MatExpr] {
        &self.eq
    }

    pub fn objective_vector(&self) -> DVector<f64> {
        let mut c = DVector::zeros(self.num_vars);
        for &(v, w) in &self.objective {
            c[v] += w;
        }
        c
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(v, w)| w * x[v]).sum::<f64>()
    }

    /// Checks variable indices against `num_vars`.
    pub fn validate(&self) -> Result<()> {
        let all = self.psd.iter().chain(&self.nonneg).chain(&self.eq);
        let too_big = all
            .filter_map(MatExpr::max_var)
            .chain(self.objective.iter().map(|&(v, _)| v))
            .any(|v| v >= self.num_vars);
        if too_big {
            return Err(Error::Dimension("constraint refers to an undeclared variable".into()));
        }
        Ok(())
    }

    /// Smallest constraint slack at `x`: minimum eigenvalue over PSD blocks,
    /// minimum entry over nonnegativity rows, minus the largest equality
    /// violation.
    pub fn min_slack(&self, x: &DVector<f64>) -> f64 {
        let mut s = f64::INFINITY;
        for e in &self.psd {
            let m = e.eval(x);
            if m.nrows() > 0 {
                s = s.min(m.symmetric_eigenvalues().min());
            }
        }
        for e in &self.nonneg {
            let v = e.eval(x);
            if v.nrows() > 0 {
                s = s.min(v.min());
            }
        }
        for e in &self.eq {
            let v = e.eval(x);
            if v.nrows() > 0 {
                s = s.min(-v.amax());
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

impl std::fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverStatus::Optimal => "optimal",
            SolverStatus::Infeasible => "infeasible",
            SolverStatus::NumericalFailure => "numerical_failure",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutcome {
    pub status: SolverStatus,
    /// Present iff `status` is optimal.
    pub x: Option<DVector<f64>>,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub diagnostics: String,
}

impl SolverOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolverStatus::Optimal
    }
}

/// A conic solver session. Implementations must be usable from several
/// threads on independent programs.
pub trait ConicSolver: Send + Sync {
    fn solve(&self, program: &ConicProgram) -> SolverOutcome;
}
