//! Balanced representation of a strongly connected network: positive masses
//! `M` such that `M * L` is the Laplacian of a balanced graph.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{weighted_laplacian, DirectedNetwork, IncidenceDecomposition};

/// Left null vector of a strongly connected Laplacian, positive and scaled to
/// sum to `n`.
pub fn left_perron_vector(lap: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = lap.nrows();
    if lap.ncols() != n {
        return Err(Error::Dimension(format!("{}x{} Laplacian", n, lap.ncols())));
    }
    if n == 1 {
        return Ok(DVector::repeat(1, 1.0));
    }
    let scale = lap.amax().max(f64::MIN_POSITIVE);

    // Null space of L^T via SVD: v^T L = 0 <=> L^T v = 0.
    let svd = lap.transpose().svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numerical("SVD did not produce singular vectors".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let (s_min, s_next) = (svd.singular_values[order[0]], svd.singular_values[order[1]]);
    let rank_tol = 1e-10 * scale * n as f64;
    if s_min > rank_tol || s_next <= rank_tol {
        return Err(Error::Numerical(format!(
            "left null space of the Laplacian is not one-dimensional \
             (smallest singular values {s_min:.3e}, {s_next:.3e})"
        )));
    }
    if lap.row_sum().amax() <= 1e-12 * scale {
        // Already balanced: the all-ones vector is exact.
        return Ok(DVector::repeat(n, 1.0));
    }
    let mut v: DVector<f64> = v_t.row(order[0]).transpose();
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    let vmax = v[imax];
    if v.min() <= 1e-12 * vmax {
        return Err(Error::Numerical(format!(
            "left null vector is not sign-definite (min {:.3e}, max {vmax:.3e})",
            v.min()
        )));
    }
    let sum = v.sum();
    Ok(v * (n as f64 / sum))
}

/// `M x' = -L_b x + F_b u`, `y = H x` with `L_b = M L` and `F_b = M F`.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedRepresentation {
    pub masses: DVector<f64>,
    pub lap_b: DMatrix<f64>,
    pub input_b: DMatrix<f64>,
    /// Edge weights of the balanced graph, in the network's edge order:
    /// edge `t -> h` gets `M[h] * w`.
    pub weights_b: DVector<f64>,
}

impl BalancedRepresentation {
    pub fn new(net: &DirectedNetwork) -> Result<Self> {
        if !net.is_strongly_connected() {
            return Err(Error::NotStronglyConnected);
        }
        let masses = left_perron_vector(&net.laplacian())?;
        let inc = net.incidence();
        Ok(Self::from_masses(net, &inc, masses))
    }

    fn from_masses(net: &DirectedNetwork, inc: &IncidenceDecomposition, masses: DVector<f64>) -> Self {
        let weights_b = DVector::from_iterator(
            net.num_edges(),
            net.edges().iter().map(|e| masses[e.head] * e.weight),
        );
        // Assembled through the incidence factorization so the reduced side,
        // built the same way, reproduces it bit for bit under the identity
        // clustering.
        let lap_b = weighted_laplacian(&inc.b0, &weights_b, &inc.b);
        let mut input_b = net.input().clone();
        for (i, mut row) in input_b.row_iter_mut().enumerate() {
            row *= masses[i];
        }
        Self {
            masses,
            lap_b,
            input_b,
            weights_b,
        }
    }

    /// `sigma_M = 1^T M 1`.
    pub fn total_mass(&self) -> f64 {
        self.masses.sum()
    }
}
