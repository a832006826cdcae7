//! Deflated error system between a network and its reduced model, and H2
//! norms via Lyapunov/Sylvester equations.

use nalgebra::{DMatrix, DVector};

use crate::balancing::BalancedRepresentation;
use crate::error::{Error, Result};
use crate::graph::DirectedNetwork;
use crate::lyapunov::{solve_sylvester_schur, sylvester_residual, SchurForm};
use crate::reduction::QuotientModel;

const RESIDUAL_LIMIT: f64 = 1e-8;

/// `x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Squared H2 norm through the controllability Gramian.
    pub fn h2_norm_squared(&self) -> Result<f64> {
        h2_distance_squared(self, &self.zero_like())
    }

    /// Squared H2 norm through the observability Gramian.
    pub fn h2_norm_squared_observability(&self) -> Result<f64> {
        require_hurwitz(&self.a)?;
        let at = self.a.transpose();
        let s = SchurForm::new(&at)?;
        let ctc = self.c.transpose() * &self.c;
        let q = solve_sylvester_schur(&s, &s, &ctc)?;
        check_residual(&at, &at, &ctc, &q)?;
        Ok((self.b.transpose() * q * &self.b).trace())
    }

    pub fn h2_norm(&self) -> Result<f64> {
        Ok(self.h2_norm_squared()?.max(0.0).sqrt())
    }

    fn zero_like(&self) -> StateSpace {
        StateSpace {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, self.b.ncols()),
            c: DMatrix::zeros(self.c.nrows(), 0),
        }
    }
}

/// `||G1 - G2||_H2^2 = tr(C1 P11 C1^T) - 2 tr(C1 P12 C2^T) + tr(C2 P22 C2^T)`
/// with `A_i P_ij + P_ij A_j^T + B_i B_j^T = 0`.
///
/// Equal arguments give exactly zero.
pub fn h2_distance_squared(g1: &StateSpace, g2: &StateSpace) -> Result<f64> {
    if g1.b.ncols() != g2.b.ncols() || g1.c.nrows() != g2.c.nrows() {
        return Err(Error::Dimension(format!(
            "systems have {}x{} and {}x{} transfer matrices",
            g1.c.nrows(),
            g1.b.ncols(),
            g2.c.nrows(),
            g2.b.ncols()
        )));
    }
    require_hurwitz(&g1.a)?;
    require_hurwitz(&g2.a)?;
    let s1 = SchurForm::new(&g1.a)?;
    let s2 = SchurForm::new(&g2.a)?;
    let term = |sa: &SchurForm, sb: &SchurForm, x: &StateSpace, y: &StateSpace| -> Result<f64> {
        let rhs = &x.b * y.b.transpose();
        let p = solve_sylvester_schur(sa, sb, &rhs)?;
        check_residual(&x.a, &y.a, &rhs, &p)?;
        Ok((&x.c * p * y.c.transpose()).trace())
    };
    let t11 = term(&s1, &s1, g1, g1)?;
    let t12 = term(&s1, &s2, g1, g2)?;
    let t22 = term(&s2, &s2, g2, g2)?;
    let value = t11 - 2.0 * t12 + t22;
    if value < -1e-9 * (t11.abs() + t22.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!("negative squared H2 norm {value:.3e}")));
    }
    Ok(value.max(0.0))
}

fn check_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<()> {
    let res = sylvester_residual(a, b, c, x);
    if res > RESIDUAL_LIMIT {
        return Err(Error::Numerical(format!("Sylvester residual {res:.3e} too large")));
    }
    Ok(())
}

/// Largest real part over the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// All eigenvalues have real part below `-1e-9 * max(||A||, 1)`.
pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    spectral_abscissa(a) < -1e-9 * a.norm().max(1.0)
}

fn require_hurwitz(a: &DMatrix<f64>) -> Result<()> {
    if is_hurwitz(a) {
        Ok(())
    } else {
        Err(Error::NotHurwitz {
            max_real: spectral_abscissa(a),
        })
    }
}

/// `S = [-I; 1^T]`, `k x (k-1)`.
pub fn deflation_basis(k: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(k, k.saturating_sub(1));
    for i in 0..k.saturating_sub(1) {
        s[(i, i)] = -1.0;
        s[(k - 1, i)] = 1.0;
    }
    s
}

/// `S^+ = (S^T M^-1 S)^-1 S^T M^-1`. Satisfies `S^+ S = I` and `S^+ M 1 = 0`.
pub fn deflation_pinv(masses: &DVector<f64>) -> Result<DMatrix<f64>> {
    let k = masses.len();
    let s = deflation_basis(k);
    let mut smi = s.transpose();
    for j in 0..k {
        smi.column_mut(j).scale_mut(1.0 / masses[j]);
    }
    let gram = &smi * &s;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("deflation Gram matrix is not positive definite".into()))?;
    Ok(chol.solve(&smi))
}

/// Deflated realization of one side of the error system:
/// `A = -S^+ L_b M^-1 S`, `B = S^+ F_b`, `C = H M^-1 S`.
pub fn deflated_side(
    lap_b: &DMatrix<f64>,
    masses: &DVector<f64>,
    input_b: &DMatrix<f64>,
    output: &DMatrix<f64>,
) -> Result<StateSpace> {
    let k = masses.len();
    let s = deflation_basis(k);
    let sp = deflation_pinv(masses)?;
    let mut minv_s = s;
    for i in 0..k {
        minv_s.row_mut(i).scale_mut(1.0 / masses[i]);
    }
    StateSpace::new(-(&sp * lap_b * &minv_s), &sp * input_b, output * minv_s)
}

/// Error system `G - G_hat` in deflated coordinates, kept as its two
/// block-diagonal sides.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRealization {
    pub full: StateSpace,
    pub reduced: StateSpace,
    /// Gain of the common integrator mode, which must vanish:
    /// `(H 1 1^T F_b - H_hat 1 1^T F_hat_b) / sigma`.
    pub integrator_mismatch: DMatrix<f64>,
}

impl ErrorRealization {
    pub fn new(
        net: &DirectedNetwork,
        rep: &BalancedRepresentation,
        quotient: &QuotientModel,
        weights: &DVector<f64>,
    ) -> Result<Self> {
        let red = quotient.reduced_system(weights)?;
        let full = deflated_side(&rep.lap_b, &rep.masses, &rep.input_b, net.output())?;
        let reduced = deflated_side(&red.lap_b, &quotient.masses, &quotient.input_b, &quotient.output)?;
        let sigma = rep.total_mass();
        let gain = |h: &DMatrix<f64>, fb: &DMatrix<f64>| h.column_sum() * fb.row_sum();
        let integrator_mismatch =
            (gain(net.output(), &rep.input_b) - gain(&quotient.output, &quotient.input_b)) / sigma;
        Ok(Self {
            full,
            reduced,
            integrator_mismatch,
        })
    }

    pub fn order(&self) -> usize {
        self.full.order() + self.reduced.order()
    }

    /// `A_e = blockdiag(A, A_hat)`.
    pub fn a(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.full.order(), self.reduced.order());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.full.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&self.reduced.a);
        a
    }

    /// `B_e = [B; B_hat]`.
    pub fn b(&self) -> DMatrix<f64> {
        let n1 = self.full.order();
        let mut b = DMatrix::zeros(self.order(), self.full.b.ncols());
        b.rows_mut(0, n1).copy_from(&self.full.b);
        b.rows_mut(n1, self.reduced.order()).copy_from(&self.reduced.b);
        b
    }

    /// `C_e = [C, -C_hat]`.
    pub fn c(&self) -> DMatrix<f64> {
        let n1 = self.full.order();
        let mut c = DMatrix::zeros(self.full.c.nrows(), self.order());
        c.columns_mut(0, n1).copy_from(&self.full.c);
        c.columns_mut(n1, self.reduced.order()).copy_from(&(-&self.reduced.c));
        c
    }

    pub fn assembled(&self) -> StateSpace {
        StateSpace {
            a: self.a(),
            b: self.b(),
            c: self.c(),
        }
    }

    pub fn h2_norm_squared(&self) -> Result<f64> {
        let scale = self.integrator_mismatch.amax();
        if scale > 1e-9 * (1.0 + self.full.b.amax() * self.full.c.amax()) {
            return Err(Error::Numerical(format!(
                "error system keeps an integrator (gain {scale:.3e})"
            )));
        }
        h2_distance_squared(&self.full, &self.reduced)
    }

    pub fn h2_norm(&self) -> Result<f64> {
        Ok(self.h2_norm_squared()?.sqrt())
    }
}

/// Error system without deflation, `A = -blockdiag(L, L_hat)`,
/// `B = [F; F_hat]`, `C = [H, -H_hat]`. It has two poles at the origin, so
/// it is only meaningful away from `s = 0`.
pub fn undeflated_error(
    net: &DirectedNetwork,
    quotient: &QuotientModel,
    weights: &DVector<f64>,
) -> Result<StateSpace> {
    let red = quotient.reduced_system(weights)?;
    let (n, r) = (net.n(), quotient.r());
    let mut a = DMatrix::zeros(n + r, n + r);
    a.view_mut((0, 0), (n, n)).copy_from(&(-net.laplacian()));
    a.view_mut((n, n), (r, r)).copy_from(&(-&red.lap));
    let mut b = DMatrix::zeros(n + r, net.num_inputs());
    b.rows_mut(0, n).copy_from(net.input());
    b.rows_mut(n, r).copy_from(&red.input);
    let mut c = DMatrix::zeros(net.num_outputs(), n + r);
    c.columns_mut(0, n).copy_from(net.output());
    c.columns_mut(n, r).copy_from(&(-&red.output));
    StateSpace::new(a, b, c)
}

/// Whether the reduced model reaches consensus: `L_hat` has a simple zero
/// eigenvalue and the rest of its spectrum in the open right half-plane.
pub fn reduced_reaches_consensus(quotient: &QuotientModel, weights: &DVector<f64>) -> Result<bool> {
    if quotient.r() == 1 {
        return Ok(true);
    }
    let red = quotient.reduced_system(weights)?;
    let side = deflated_side(&red.lap_b, &quotient.masses, &quotient.input_b, &quotient.output)?;
    Ok(is_hurwitz(&side.a))
}
