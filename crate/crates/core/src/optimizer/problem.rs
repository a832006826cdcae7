use nalgebra::{DMatrix, DVector};

use crate::balancing::BalancedRepresentation;
use crate::error::{Error, Result};
use crate::graph::{Clustering, DirectedNetwork};
use crate::lyapunov::solve_lyapunov;
use crate::h2::{deflated_side, deflation_basis, deflation_pinv, h2_distance_squared, ErrorRealization, StateSpace};
use crate::reduction::{QuotientModel, WeightParameterization};

/// Everything the weight optimization needs about one (network, clustering)
/// pair. The error system lives in `N = (n - 1) + (r - 1)` deflated states.
#[derive(Debug, Clone)]
pub struct WeightingProblem {
    pub net: DirectedNetwork,
    pub rep: BalancedRepresentation,
    pub quotient: QuotientModel,
    pub param: WeightParameterization,
    full: StateSpace,
    reduced_b: DMatrix<f64>,
    reduced_c: DMatrix<f64>,
    /// `X_k` with `-S_r^+ B0_hat W_hat B_hat^T M_hat^-1 S_r = sum_k w_k X_k`.
    edge_blocks: Vec<DMatrix<f64>>,
}

impl WeightingProblem {
    pub fn new(net: &DirectedNetwork, clustering: &Clustering) -> Result<Self> {
        let rep = BalancedRepresentation::new(net)?;
        let quotient = QuotientModel::new(net, &rep, clustering)?;
        Self::from_parts(net.clone(), rep, quotient)
    }

    pub fn from_parts(
        net: DirectedNetwork,
        rep: BalancedRepresentation,
        quotient: QuotientModel,
    ) -> Result<Self> {
        let param = WeightParameterization::new(&quotient)?;
        let full = deflated_side(&rep.lap_b, &rep.masses, &rep.input_b, net.output())?;
        let r = quotient.r();
        let s_r = deflation_basis(r);
        let sp_r = deflation_pinv(&quotient.masses)?;
        let mut minv_s = s_r;
        for i in 0..r {
            minv_s.row_mut(i).scale_mut(1.0 / quotient.masses[i]);
        }
        let reduced_b = &sp_r * &quotient.input_b;
        let reduced_c = &quotient.output * &minv_s;
        let edge_blocks = (0..quotient.num_edges())
            .map(|k| {
                let left = -(&sp_r * quotient.b0_hat.column(k));
                let right = quotient.b_hat.column(k).transpose() * &minv_s;
                left * right
            })
            .collect();
        Ok(Self {
            net,
            rep,
            quotient,
            param,
            full,
            reduced_b,
            reduced_c,
            edge_blocks,
        })
    }

    /// `n - 1`.
    pub fn full_order(&self) -> usize {
        self.full.order()
    }

    /// `r - 1`.
    pub fn reduced_order(&self) -> usize {
        self.quotient.r() - 1
    }

    /// `N = n + r - 2`.
    pub fn dim(&self) -> usize {
        self.full_order() + self.reduced_order()
    }

    pub fn dim_mu(&self) -> usize {
        self.param.dim()
    }

    pub fn num_inputs(&self) -> usize {
        self.full.b.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.full.c.nrows()
    }

    pub fn weights(&self, mu: &DVector<f64>) -> DVector<f64> {
        self.param.weights_from_mu(mu)
    }

    /// `-S_r^+ B0_hat W_hat B_hat^T M_hat^-1 S_r`, the deflated reduced
    /// state matrix.
    pub fn reduced_block(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        let k = self.reduced_order();
        let mut x = DMatrix::zeros(k, k);
        for (w, blk) in weights.iter().zip(&self.edge_blocks) {
            x += blk * *w;
        }
        x
    }

    /// Reduced block as a function of `mu`.
    pub fn reduced_block_mu(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        self.reduced_block(&self.weights(mu))
    }

    /// Coefficient of `mu_j` in the reduced block.
    pub fn mu_blocks(&self) -> Vec<DMatrix<f64>> {
        (0..self.dim_mu())
            .map(|j| {
                let mut e = DVector::zeros(self.dim_mu());
                e[j] = 1.0;
                self.reduced_block_mu(&e)
            })
            .collect()
    }

    /// `A_bar = blockdiag(-S_n^+ L_b M^-1 S_n, 0)`.
    pub fn a_bar(&self) -> DMatrix<f64> {
        let n1 = self.full_order();
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.full.a);
        a
    }

    /// `E = [0 0; I 0]` with the identity in rows `n-1..` and columns `0..r-1`.
    pub fn e_matrix(&self) -> DMatrix<f64> {
        let (n1, n2) = (self.full_order(), self.reduced_order());
        let mut e = DMatrix::zeros(self.dim(), self.dim());
        for i in 0..n2 {
            e[(n1 + i, i)] = 1.0;
        }
        e
    }

    /// `A_bar_r` with the reduced block in rows `0..r-1`, columns `n-1..`.
    pub fn a_r_bar(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        let (n1, n2) = (self.full_order(), self.reduced_order());
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        a.view_mut((0, n1), (n2, n2)).copy_from(&self.reduced_block(weights));
        a
    }

    /// `A_e = A_bar + E A_bar_r`.
    pub fn a_e(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        self.a_bar() + self.e_matrix() * self.a_r_bar(weights)
    }

    pub fn b_e(&self) -> DMatrix<f64> {
        let n1 = self.full_order();
        let mut b = DMatrix::zeros(self.dim(), self.num_inputs());
        b.rows_mut(0, n1).copy_from(&self.full.b);
        b.rows_mut(n1, self.reduced_order()).copy_from(&self.reduced_b);
        b
    }

    pub fn c_e(&self) -> DMatrix<f64> {
        let n1 = self.full_order();
        let mut c = DMatrix::zeros(self.num_outputs(), self.dim());
        c.columns_mut(0, n1).copy_from(&self.full.c);
        c.columns_mut(n1, self.reduced_order()).copy_from(&(-&self.reduced_c));
        c
    }

    /// Reduced side of the error system at `weights`.
    fn reduced_side(&self, weights: &DVector<f64>) -> StateSpace {
        StateSpace {
            a: self.reduced_block(weights),
            b: self.reduced_b.clone(),
            c: self.reduced_c.clone(),
        }
    }

    /// Squared H2 norm of the reduction error, from the Lyapunov oracle.
    pub fn oracle_h2_squared(&self, weights: &DVector<f64>) -> Result<f64> {
        ErrorRealization::new(&self.net, &self.rep, &self.quotient, weights)?.h2_norm_squared()
    }

    pub fn oracle_h2(&self, weights: &DVector<f64>) -> Result<f64> {
        Ok(self.oracle_h2_squared(weights)?.sqrt())
    }

    /// Squared H2 norm of the error system with the inputs augmented by
    /// `sqrt(delta_hat) E`. This is the exact value of the fixed-weight
    /// LMI problem at a given `delta_hat`.
    pub fn augmented_h2_squared(&self, weights: &DVector<f64>, delta_hat: f64) -> Result<f64> {
        let (p, n2) = (self.num_inputs(), self.reduced_order());
        let mut full = self.full.clone();
        let mut fb = DMatrix::zeros(full.order(), p + n2);
        fb.columns_mut(0, p).copy_from(&full.b);
        full.b = fb;
        let mut red = self.reduced_side(weights);
        let mut rb = DMatrix::zeros(n2, p + n2);
        rb.columns_mut(0, p).copy_from(&red.b);
        for i in 0..n2 {
            rb[(i, p + i)] = delta_hat.sqrt();
        }
        red.b = rb;
        h2_distance_squared(&full, &red)
    }

    /// Controllability Gramian of `(A_e, [B_e, sqrt(delta_hat) E])`.
    pub fn augmented_gramian(&self, weights: &DVector<f64>, delta_hat: f64) -> Result<DMatrix<f64>> {
        let b = self.b_e();
        let e = self.e_matrix();
        let rhs = &b * b.transpose() + &e * e.transpose() * delta_hat;
        let x = solve_lyapunov(&self.a_e(weights), &rhs)?;
        Ok((&x + x.transpose()) * 0.5)
    }

    /// Free coordinates of the clustering-based projection weights.
    pub fn initial_mu(&self) -> Result<DVector<f64>> {
        let w0 = self.quotient.projection_weights(&self.rep)?;
        self.param.mu_from_weights(&w0, 1e-9)
    }

    /// `phi(mu) = [[-A_r^T A_r, 0, A_r^T], [0, 0, 0], [A_r, 0, -I]]`, of size
    /// `2N + p`.
    pub fn phi_map(&self, mu: &DVector<f64>) -> DMatrix<f64> {
        let ar = self.a_r_bar(&self.weights(mu));
        let (nn, p) = (self.dim(), self.num_inputs());
        let mut out = DMatrix::zeros(2 * nn + p, 2 * nn + p);
        out.view_mut((0, 0), (nn, nn)).copy_from(&(-(ar.transpose() * &ar)));
        out.view_mut((0, nn + p), (nn, nn)).copy_from(&ar.transpose());
        out.view_mut((nn + p, 0), (nn, nn)).copy_from(&ar);
        out.view_mut((nn + p, nn + p), (nn, nn))
            .copy_from(&(-DMatrix::identity(nn, nn)));
        out
    }

    /// The nonzero block of `A_r^T A_r`, as a function of the weights.
    pub fn phi_a(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        let x = self.reduced_block(weights);
        x.transpose() * x
    }

    /// Directional derivative of `phi` at `mu` along `h`.
    pub fn dphi(&self, mu: &DVector<f64>, h: &DVector<f64>) -> DMatrix<f64> {
        let ar = self.a_r_bar(&self.weights(mu));
        let ah = self.a_r_bar(&self.weights(h));
        let (nn, p) = (self.dim(), self.num_inputs());
        let mut out = DMatrix::zeros(2 * nn + p, 2 * nn + p);
        let quad = ah.transpose() * &ar + ar.transpose() * &ah;
        out.view_mut((0, 0), (nn, nn)).copy_from(&(-quad));
        out.view_mut((0, nn + p), (nn, nn)).copy_from(&ah.transpose());
        out.view_mut((nn + p, 0), (nn, nn)).copy_from(&ah);
        out
    }

    /// `psi(Q_hat, delta_hat) = [[Q A_bar + A_bar^T Q, Q B_e, Q E], [B_e^T Q, -delta I, 0], [E^T Q, 0, 0]]`.
    pub fn psi_map(&self, q_hat: &DMatrix<f64>, delta_hat: f64) -> DMatrix<f64> {
        let (nn, p) = (self.dim(), self.num_inputs());
        let (a, b, e) = (self.a_bar(), self.b_e(), self.e_matrix());
        let mut out = DMatrix::zeros(2 * nn + p, 2 * nn + p);
        let qa = q_hat * &a;
        out.view_mut((0, 0), (nn, nn)).copy_from(&(&qa + qa.transpose()));
        let qb = q_hat * &b;
        out.view_mut((0, nn), (nn, p)).copy_from(&qb);
        out.view_mut((nn, 0), (p, nn)).copy_from(&qb.transpose());
        out.view_mut((nn, nn), (p, p))
            .copy_from(&(-DMatrix::identity(p, p) * delta_hat));
        let qe = q_hat * &e;
        out.view_mut((0, nn + p), (nn, nn)).copy_from(&qe);
        out.view_mut((nn + p, 0), (nn, nn)).copy_from(&qe.transpose());
        out
    }

    pub fn check_mu(&self, mu: &DVector<f64>) -> Result<()> {
        if mu.len() != self.dim_mu() {
            return Err(Error::Dimension(format!(
                "mu has {} entries, expected {}",
                mu.len(),
                self.dim_mu()
            )));
        }
        Ok(())
    }
}
