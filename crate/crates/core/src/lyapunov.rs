//! Dense Sylvester and Lyapunov solvers (Bartels-Stewart on real Schur forms).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Real Schur form `A = Q T Q^T` with the diagonal block partition of `T`.
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
    /// `(start, size)` of each 1x1 or 2x2 diagonal block, top to bottom.
    blocks: Vec<(usize, usize)>,
}

impl SchurForm {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", n, a.ncols())));
        }
        if n == 0 {
            return Ok(Self {
                q: DMatrix::zeros(0, 0),
                t: DMatrix::zeros(0, 0),
                blocks: Vec::new(),
            });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        let (q, mut t) = a
            .clone()
            .try_schur(f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?
            .unpack();
        let mut blocks = Vec::new();
        let mut dropped = 0.0f64;
        let mut i = 0;
        while i < n {
            let size = if i + 1 < n && t[(i + 1, i)] != 0.0 { 2 } else { 1 };
            for c in i..i + size {
                for r in i + size..n {
                    dropped = dropped.max(t[(r, c)].abs());
                    t[(r, c)] = 0.0;
                }
            }
            blocks.push((i, size));
            i += size;
        }
        if dropped > 1e-12 * t.amax() {
            return Err(Error::Numerical(format!(
                "Schur form is not quasi-triangular (subdiagonal entry {dropped:.3e})"
            )));
        }
        Ok(Self { q, t, blocks })
    }

    pub fn dim(&self) -> usize {
        self.t.nrows()
    }
}

/// Solves `A X + X B^T + C = 0`.
pub fn solve_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_sylvester_schur(&SchurForm::new(a)?, &SchurForm::new(b)?, c)
}

/// Solves `A X + X A^T + Q = 0`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = SchurForm::new(a)?;
    solve_sylvester_schur(&s, &s, q)
}

/// Sylvester solve with both coefficient matrices already in Schur form.
pub fn solve_sylvester_schur(sa: &SchurForm, sb: &SchurForm, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (m, n) = (sa.dim(), sb.dim());
    if c.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "right-hand side is {}x{}, expected {m}x{n}",
            c.nrows(),
            c.ncols()
        )));
    }
    if m == 0 || n == 0 {
        return Ok(DMatrix::zeros(m, n));
    }
    let (ta, tb) = (&sa.t, &sb.t);
    // T_A Y + Y T_B^T = D with D = -Q_A^T C Q_B.
    let mut y = -(sa.q.transpose() * c * &sb.q);

    for &(j0, jb) in sb.blocks.iter().rev() {
        // Move the already solved columns k > j to the right-hand side.
        if j0 + jb < n {
            let solved = y.columns(j0 + jb, n - j0 - jb).into_owned();
            let coupling = tb.view((j0, j0 + jb), (jb, n - j0 - jb)).transpose();
            let update = solved * coupling;
            let mut cols = y.columns_mut(j0, jb);
            cols -= update;
        }
        let tbb = tb.view((j0, j0), (jb, jb)).into_owned();
        for &(i0, ib) in sa.blocks.iter().rev() {
            let mut rhs = y.view((i0, j0), (ib, jb)).into_owned();
            if i0 + ib < m {
                let coupling = ta.view((i0, i0 + ib), (ib, m - i0 - ib));
                let below = y.view((i0 + ib, j0), (m - i0 - ib, jb));
                rhs -= coupling * below;
            }
            let taa = ta.view((i0, i0), (ib, ib)).into_owned();
            let block = solve_small(&taa, &tbb, &rhs)?;
            y.view_mut((i0, j0), (ib, jb)).copy_from(&block);
        }
    }
    Ok(&sa.q * y * sb.q.transpose())
}

/// `a Y + Y b^T = rhs` for blocks of size at most 2, via the Kronecker form
/// `(I (x) a + b (x) I) vec(Y) = vec(rhs)`.
fn solve_small(a: &DMatrix<f64>, b: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (p, q) = (a.nrows(), b.nrows());
    if p == 1 && q == 1 {
        let d = a[(0, 0)] + b[(0, 0)];
        if d == 0.0 {
            return Err(Error::Numerical(
                "Sylvester equation is singular (A and -B share an eigenvalue)".into(),
            ));
        }
        return Ok(DMatrix::from_element(1, 1, rhs[(0, 0)] / d));
    }
    let k = p * q;
    let mut mat = DMatrix::zeros(k, k);
    for col in 0..q {
        for row in 0..p {
            let r = col * p + row;
            for l in 0..p {
                mat[(r, col * p + l)] += a[(row, l)];
            }
            for l in 0..q {
                mat[(r, l * p + row)] += b[(col, l)];
            }
        }
    }
    let vec = DVector::from_column_slice(rhs.as_slice());
    let sol = mat.lu().solve(&vec).ok_or_else(|| {
        Error::Numerical("Sylvester equation is singular (A and -B share an eigenvalue)".into())
    })?;
    Ok(DMatrix::from_column_slice(p, q, sol.as_slice()))
}

/// Relative residual `||A X + X B^T + C||_F / (||A|| ||X|| + ||X|| ||B|| + ||C||)`.
pub fn sylvester_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    let res = a * x + x * b.transpose() + c;
    let scale = (a.norm() + b.norm()) * x.norm() + c.norm();
    if scale == 0.0 {
        0.0
    } else {
        res.norm() / scale
    }
}
