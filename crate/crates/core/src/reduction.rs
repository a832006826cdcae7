//! Quotient graph over a clustering, the parameterized reduced-order model,
//! and the null-space parameterization of balanced quotient weights.

use nalgebra::{DMatrix, DVector};

use crate::balancing::BalancedRepresentation;
use crate::error::{Error, Result};
use crate::graph::{weighted_laplacian, Clustering, DirectedNetwork};

/// Quotient of the balanced graph: one edge per ordered pair of clusters
/// joined by at least one original edge, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientModel {
    pub b_hat: DMatrix<f64>,
    pub b0_hat: DMatrix<f64>,
    /// Column `k` of `b_hat` is the edge `edges[k] = (tail cluster, head cluster)`.
    pub edges: Vec<(usize, usize)>,
    /// `M_hat = Pi^T M Pi`, stored as its diagonal.
    pub masses: DVector<f64>,
    /// `F_hat_b = Pi^T F_b`.
    pub input_b: DMatrix<f64>,
    /// `H_hat = H Pi`.
    pub output: DMatrix<f64>,
    pub clustering: Clustering,
}

impl QuotientModel {
    pub fn new(
        net: &DirectedNetwork,
        rep: &BalancedRepresentation,
        clustering: &Clustering,
    ) -> Result<Self> {
        let n = net.n();
        if clustering.n() != n {
            return Err(Error::InvalidClustering(format!(
                "clustering covers {} vertices, network has {n}",
                clustering.n()
            )));
        }
        let r = clustering.r();

        let mut edges: Vec<(usize, usize)> = Vec::new();
        for e in net.edges() {
            let pair = (clustering.cluster_of(e.tail), clustering.cluster_of(e.head));
            if pair.0 != pair.1 && !edges.contains(&pair) {
                edges.push(pair);
            }
        }
        let (b_hat, b0_hat) = incidence_of_pairs(r, &edges);

        let mut masses = DVector::zeros(r);
        let mut input_b = DMatrix::zeros(r, net.num_inputs());
        let mut output = DMatrix::zeros(net.num_outputs(), r);
        for v in 0..n {
            let c = clustering.cluster_of(v);
            masses[c] += rep.masses[v];
            for j in 0..net.num_inputs() {
                input_b[(c, j)] += rep.input_b[(v, j)];
            }
            for i in 0..net.num_outputs() {
                output[(i, c)] += net.output()[(i, v)];
            }
        }

        let model = Self {
            b_hat,
            b0_hat,
            edges,
            masses,
            input_b,
            output,
            clustering: clustering.clone(),
        };
        if !model.is_strongly_connected() {
            return Err(Error::QuotientNotStronglyConnected);
        }
        Ok(model)
    }

    pub fn r(&self) -> usize {
        self.masses.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_strongly_connected(&self) -> bool {
        let r = self.r();
        let mut fwd = vec![vec![false; r]; r];
        for &(t, h) in &self.edges {
            fwd[t][h] = true;
        }
        let reach = |forward: bool| {
            let mut seen = vec![false; r];
            let mut stack = vec![0];
            seen[0] = true;
            while let Some(v) = stack.pop() {
                for u in 0..r {
                    let linked = if forward { fwd[v][u] } else { fwd[u][v] };
                    if linked && !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    /// `B_hat * w`, the per-cluster imbalance of quotient weights `w`.
    pub fn imbalance(&self, weights: &DVector<f64>) -> DVector<f64> {
        &self.b_hat * weights
    }

    /// Checks `w > 0` elementwise and `||B_hat w||_inf <= tol * max(1, ||w||_inf)`.
    pub fn check_admissible(&self, weights: &DVector<f64>, tol: f64) -> Result<()> {
        if weights.len() != self.num_edges() {
            return Err(Error::Dimension(format!(
                "{} weights for {} quotient edges",
                weights.len(),
                self.num_edges()
            )));
        }
        if let Some(k) = weights.iter().position(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::Inadmissible(format!(
                "weight {} of quotient edge {k} is not positive",
                weights[k]
            )));
        }
        let imb = self.imbalance(weights).amax();
        if imb > tol * weights.amax().max(1.0) {
            return Err(Error::Inadmissible(format!(
                "quotient weights are not balanced (||B w||_inf = {imb:.3e})"
            )));
        }
        Ok(())
    }

    /// `L_hat_b = B0_hat * Diag(w) * B_hat^T`.
    pub fn balanced_laplacian(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        weighted_laplacian(&self.b0_hat, weights, &self.b_hat)
    }

    /// The parameterized reduced-order model at weights `w > 0`.
    pub fn reduced_system(&self, weights: &DVector<f64>) -> Result<ReducedSystem> {
        if weights.len() != self.num_edges() {
            return Err(Error::Dimension(format!(
                "{} weights for {} quotient edges",
                weights.len(),
                self.num_edges()
            )));
        }
        if let Some(k) = weights.iter().position(|&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::Inadmissible(format!(
                "weight {} of quotient edge {k} is not positive",
                weights[k]
            )));
        }
        let lap_b = self.balanced_laplacian(weights);
        let mut lap = lap_b.clone();
        let mut input = self.input_b.clone();
        for k in 0..self.r() {
            let inv = 1.0 / self.masses[k];
            lap.row_mut(k).scale_mut(inv);
            input.row_mut(k).scale_mut(inv);
        }
        Ok(ReducedSystem {
            lap,
            lap_b,
            input,
            output: self.output.clone(),
            weights: weights.clone(),
        })
    }

    /// Clustering-based projection weights: edge `(j -> i)` gets
    /// `-(Pi^T L_b Pi)[i, j]`.
    pub fn projection_weights(&self, rep: &BalancedRepresentation) -> Result<DVector<f64>> {
        let projected = self.projected_laplacian(rep);
        let mut weights = DVector::zeros(self.num_edges());
        for (k, &(t, h)) in self.edges.iter().enumerate() {
            let w = -projected[(h, t)];
            if !(w > 0.0) {
                return Err(Error::Numerical(format!(
                    "quotient edge {t} -> {h} has nonpositive aggregate weight {w}"
                )));
            }
            weights[k] = w;
        }
        Ok(weights)
    }

    /// `Pi^T L_b Pi`.
    pub fn projected_laplacian(&self, rep: &BalancedRepresentation) -> DMatrix<f64> {
        let r = self.r();
        let n = rep.lap_b.nrows();
        let mut out = DMatrix::zeros(r, r);
        for i in 0..n {
            let ci = self.clustering.cluster_of(i);
            for j in 0..n {
                let v = rep.lap_b[(i, j)];
                if v != 0.0 {
                    out[(ci, self.clustering.cluster_of(j))] += v;
                }
            }
        }
        out
    }
}

/// Incidence pair `(B, B0)` for `r` vertices and `(tail, head)` edges.
pub fn incidence_of_pairs(r: usize, edges: &[(usize, usize)]) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut b = DMatrix::zeros(r, edges.len());
    let mut b0 = DMatrix::zeros(r, edges.len());
    for (k, &(t, h)) in edges.iter().enumerate() {
        b[(h, k)] = 1.0;
        b[(t, k)] = -1.0;
        b0[(h, k)] = 1.0;
    }
    (b, b0)
}

/// `L_hat = M_hat^-1 B0_hat W_hat B_hat^T`, `F_hat = M_hat^-1 F_hat_b`, `H_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub lap: DMatrix<f64>,
    pub lap_b: DMatrix<f64>,
    pub input: DMatrix<f64>,
    pub output: DMatrix<f64>,
    pub weights: DVector<f64>,
}

/// Maps free coordinates `mu` onto `ker(B_hat)` via `w = T mu`.
///
/// One row of `B_hat` (the last) is dropped to get a full-row-rank `B_bar`.
/// Basic columns are picked greedily from the right, so the free
/// coordinates are the leftmost edges that can be chosen freely.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightParameterization {
    /// `T`, `m_hat x m_bar`.
    pub lift: DMatrix<f64>,
    /// Edge indices forming the invertible block `B_bar_a`, ascending.
    pub basic: Vec<usize>,
    /// Edge indices of the free coordinates `mu`, ascending.
    pub free: Vec<usize>,
    pub block_a: DMatrix<f64>,
    pub block_b: DMatrix<f64>,
}

impl WeightParameterization {
    pub fn new(quotient: &QuotientModel) -> Result<Self> {
        Self::from_incidence(&quotient.b_hat)
    }

    pub fn from_incidence(b_hat: &DMatrix<f64>) -> Result<Self> {
        let (r, m) = b_hat.shape();
        if r == 0 {
            return Err(Error::Dimension("incidence matrix has no rows".into()));
        }
        let rbar = r - 1;
        let b_bar = b_hat.rows(0, rbar).into_owned();

        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(rbar);
        let mut basic = Vec::with_capacity(rbar);
        for j in (0..m).rev() {
            if basis.len() == rbar {
                break;
            }
            let col = b_bar.column(j).into_owned();
            let norm = col.norm();
            if norm == 0.0 {
                continue;
            }
            let mut res = col;
            for _ in 0..2 {
                for q in &basis {
                    let proj = q.dot(&res);
                    res -= q * proj;
                }
            }
            let rn = res.norm();
            if rn > 1e-9 * norm {
                basis.push(res / rn);
                basic.push(j);
            }
        }
        if basic.len() < rbar {
            return Err(Error::QuotientNotStronglyConnected);
        }
        basic.sort_unstable();
        let free: Vec<usize> = (0..m).filter(|j| !basic.contains(j)).collect();

        let block_a = b_bar.select_columns(&basic);
        let block_b = b_bar.select_columns(&free);
        let solved = if rbar == 0 {
            DMatrix::zeros(0, free.len())
        } else {
            block_a
                .clone()
                .lu()
                .solve(&block_b)
                .ok_or_else(|| Error::Numerical("basic block is singular".into()))?
        };
        let mut lift = DMatrix::zeros(m, free.len());
        for (row, &j) in basic.iter().enumerate() {
            for col in 0..free.len() {
                // Incidence blocks are totally unimodular, so B_a^-1 B_b is
                // integral; remove LU roundoff.
                let v = -solved[(row, col)];
                let rounded = v.round();
                lift[(j, col)] = if (v - rounded).abs() < 1e-9 { rounded } else { v };
            }
        }
        for (col, &j) in free.iter().enumerate() {
            lift[(j, col)] = 1.0;
        }
        Ok(Self {
            lift,
            basic,
            free,
            block_a,
            block_b,
        })
    }

    /// Dimension `m_bar` of the free coordinates.
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn num_edges(&self) -> usize {
        self.lift.nrows()
    }

    /// Column permutation `P` with `P w = [mu_a; mu]`.
    pub fn permutation_matrix(&self) -> DMatrix<f64> {
        let m = self.num_edges();
        let mut p = DMatrix::zeros(m, m);
        for (row, &j) in self.basic.iter().chain(&self.free).enumerate() {
            p[(row, j)] = 1.0;
        }
        p
    }

    pub fn weights_from_mu(&self, mu: &DVector<f64>) -> DVector<f64> {
        &self.lift * mu
    }

    /// Left inverse of `T`: reads off the free coordinates and rejects
    /// weights outside `range(T)` by more than `tol * max(1, ||w||_inf)`.
    pub fn mu_from_weights(&self, weights: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        if weights.len() != self.num_edges() {
            return Err(Error::Dimension(format!(
                "{} weights for {} quotient edges",
                weights.len(),
                self.num_edges()
            )));
        }
        let mu = DVector::from_iterator(self.dim(), self.free.iter().map(|&j| weights[j]));
        let residual = (self.weights_from_mu(&mu) - weights).amax();
        if residual > tol * weights.amax().max(1.0) {
            return Err(Error::Inadmissible(format!(
                "weights are not in the balanced subspace (residual {residual:.3e})"
            )));
        }
        Ok(mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn paper6_quotient() -> (DirectedNetwork, BalancedRepresentation, QuotientModel) {
        let net = presets::paper6();
        let rep = BalancedRepresentation::new(&net).unwrap();
        let q = QuotientModel::new(&net, &rep, &presets::paper6_clustering()).unwrap();
        (net, rep, q)
    }

    fn random_setup(seed: u64) -> (DirectedNetwork, BalancedRepresentation, QuotientModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(4..=10);
        let net = if seed % 2 == 0 {
            presets::random_balanced(n, 3, &mut rng)
        } else {
            presets::random_strong(n, n, &mut rng)
        };
        let r = rng.gen_range(2..=n.min(5));
        let clustering = presets::random_clustering(n, r, &mut rng);
        let rep = BalancedRepresentation::new(&net).unwrap();
        let q = QuotientModel::new(&net, &rep, &clustering).unwrap();
        (net, rep, q)
    }

    #[test]
    fn paper6_quotient_matrices() {
        let (_, _, q) = paper6_quotient();
        #[rustfmt::skip]
        let b_hat = DMatrix::from_row_slice(3, 4, &[
            1., -1., -1., 0.,
            0., 1., 0., -1.,
            -1., 0., 1., 1.,
        ]);
        assert_eq!(q.b_hat, b_hat);
        assert_eq!(q.masses.as_slice(), &[2.0, 3.0, 1.0]);
        assert_eq!(q.input_b.as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(q.output, DMatrix::from_row_slice(1, 3, &[1., 0., 0.]));
        assert_eq!(q.edges, vec![(2, 0), (0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn identity_clustering_reproduces_the_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = presets::random_strong(6, 5, &mut rng);
        let rep = BalancedRepresentation::new(&net).unwrap();
        let q = QuotientModel::new(&net, &rep, &Clustering::identity(6)).unwrap();
        let inc = net.incidence();
        assert_eq!(q.b_hat, inc.b);
        assert_eq!(q.masses, rep.masses);
        assert_eq!(q.input_b, rep.input_b);
        assert_eq!(&q.output, net.output());
        let w0 = q.projection_weights(&rep).unwrap();
        assert_eq!(w0, rep.weights_b);
        let red = q.reduced_system(&w0).unwrap();
        assert_eq!(red.lap_b, rep.lap_b);
        assert!((&red.lap - net.laplacian()).amax() < 1e-12);
        assert!((&red.input - net.input()).amax() < 1e-12);
    }

    #[test]
    fn paper6_parameterization() {
        let (_, _, q) = paper6_quotient();
        let p = WeightParameterization::new(&q).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.free, vec![0, 1]);
        // w3 = w1 - w2, w4 = w2.
        let t = DMatrix::from_row_slice(4, 2, &[1., 0., 0., 1., 1., -1., 0., 1.]);
        assert_eq!(p.lift, t);
        assert!((&q.b_hat * &p.lift).amax() == 0.0);
        let w = p.weights_from_mu(&DVector::from_vec(vec![2.0, 1.0]));
        assert_eq!(w.as_slice(), &[2.0, 1.0, 1.0, 1.0]);
        assert_eq!(p.weights_from_mu(&DVector::zeros(2)), DVector::zeros(4));
        let mu = p.mu_from_weights(&w, 1e-12).unwrap();
        assert_eq!(mu.as_slice(), &[2.0, 1.0]);
        let bad = DVector::from_vec(vec![2.0, 1.0, 2.0, 1.0]);
        assert!(matches!(p.mu_from_weights(&bad, 1e-9), Err(Error::Inadmissible(_))));
        // P w = [mu_a; mu]
        let pw = p.permutation_matrix() * &w;
        assert_eq!(pw.rows(2, 2).as_slice(), mu.as_slice());
        let rank_a = p.block_a.clone().svd(false, false).rank(1e-12);
        assert_eq!(rank_a, 2);
    }

    #[test]
    fn two_cycle_parameterization() {
        let (b, _) = incidence_of_pairs(2, &[(0, 1), (1, 0)]);
        let p = WeightParameterization::from_incidence(&b).unwrap();
        assert_eq!(p.dim(), 1);
        let w = p.weights_from_mu(&DVector::from_vec(vec![0.7]));
        assert_eq!(w.as_slice(), &[0.7, 0.7]);
    }

    #[test]
    fn sensor14_relations_and_printed_vectors() {
        let b = presets::sensor14_quotient_incidence();
        let p = WeightParameterization::from_incidence(&b).unwrap();
        assert_eq!(p.dim(), 4);
        // Every column of T satisfies w1 = w3, w2 = w4 + w8, w6 = w8, w5 = w7.
        for t in p.lift.column_iter() {
            assert_eq!(t[0], t[2]);
            assert_eq!(t[1], t[3] + t[7]);
            assert_eq!(t[5], t[7]);
            assert_eq!(t[4], t[6]);
        }
        for printed in [presets::SENSOR14_INITIAL_WEIGHTS, presets::SENSOR14_OPTIMIZED_WEIGHTS] {
            let w = DVector::from_row_slice(&printed);
            assert!((&b * &w).amax() <= 1e-4);
            let mu = p.mu_from_weights(&w, 1e-4).unwrap();
            assert!((p.weights_from_mu(&mu) - &w).amax() <= 1e-4);
        }
    }

    #[test]
    fn lift_round_trips_and_balances() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..50 {
            let (_, _, q) = random_setup(seed);
            let p = WeightParameterization::new(&q).unwrap();
            assert_eq!(p.dim(), q.num_edges() - q.r() + 1);
            let rank = p.lift.clone().svd(false, false).rank(1e-9);
            assert_eq!(rank, p.dim());
            let mu = DVector::from_fn(p.dim(), |_, _| rng.gen_range(-2.0..2.0));
            let w = p.weights_from_mu(&mu);
            assert!(q.imbalance(&w).amax() <= 1e-12 * (1.0 + w.amax()));
            let back = p.mu_from_weights(&w, 1e-12).unwrap();
            assert!((back - mu).amax() <= 1e-12);
        }
    }

    #[test]
    fn paper6_reduced_laplacian_matches_parameterized_form() {
        let (_, _, q) = paper6_quotient();
        let w = DVector::from_vec(vec![1.7, 0.4, 1.3, 0.4]);
        let red = q.reduced_system(&w).unwrap();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(3, 3, &[
            w[0] / 2.0, 0.0, -w[0] / 2.0,
            -w[1] / 3.0, w[1] / 3.0, 0.0,
            -w[2], -w[3], w[2] + w[3],
        ]);
        assert!((&red.lap - expected).amax() < 1e-15);
        assert_eq!(red.input.as_slice(), &[0.0, 1.0 / 3.0, 0.0]);
        assert!(q.reduced_system(&DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0])).is_err());
    }

    #[test]
    fn projection_weights_example() {
        let (_, rep, q) = paper6_quotient();
        let projected = q.projected_laplacian(&rep);
        let expected = DMatrix::from_row_slice(3, 3, &[2., 0., -2., -1., 1., 0., -1., -1., 2.]);
        assert_eq!(projected, expected);
        let w0 = q.projection_weights(&rep).unwrap();
        assert_eq!(w0.as_slice(), &[2.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn random_quotients_are_consistent() {
        for seed in 0..100 {
            let (net, rep, q) = random_setup(seed);
            let scale = rep.lap_b.amax();
            // Aggregate identities.
            let sum_fb: f64 = rep.input_b.sum();
            assert!((q.input_b.sum() - sum_fb).abs() <= 1e-12 * (1.0 + sum_fb.abs()));
            assert!((q.output.column_sum() - net.output().column_sum()).amax() <= 1e-12);
            assert!((q.masses.sum() - rep.total_mass()).abs() < 1e-12 * rep.total_mass());
            // No duplicate quotient edges, one +1 and one -1 per column.
            for (a, ea) in q.edges.iter().enumerate() {
                assert!(q.edges[a + 1..].iter().all(|eb| eb != ea));
                let col = q.b_hat.column(a);
                assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
                assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
            }
            // Projection weights are positive and balanced.
            let w0 = q.projection_weights(&rep).unwrap();
            q.check_admissible(&w0, 1e-10 * scale.max(1.0)).unwrap();
            let red = q.reduced_system(&w0).unwrap();
            assert!((q.masses.transpose() * &red.lap).amax() <= 1e-10 * scale);
        }
    }

    #[test]
    fn reduced_laplacian_has_simple_zero_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for seed in 0..50 {
            let (_, rep, q) = random_setup(seed);
            let p = WeightParameterization::new(&q).unwrap();
            let w0 = q.projection_weights(&rep).unwrap();
            // Random feasible weights: perturb mu around the projection point.
            let mu0 = p.mu_from_weights(&w0, 1e-9).unwrap();
            let mut w = w0.clone();
            for _ in 0..20 {
                let mu = mu0.map(|v| v * rng.gen_range(0.7..1.3));
                let cand = p.weights_from_mu(&mu);
                if cand.min() > 0.0 {
                    w = cand;
                    break;
                }
            }
            let red = q.reduced_system(&w).unwrap();
            let ones = DVector::repeat(q.r(), 1.0);
            assert!((&red.lap * ones).amax() <= 1e-12 * red.lap.amax());
            let eig = red.lap.complex_eigenvalues();
            let zeros = eig.iter().filter(|z| z.norm() < 1e-9).count();
            assert_eq!(zeros, 1);
            assert!(eig.iter().filter(|z| z.norm() >= 1e-9).all(|z| z.re > 0.0));
        }
    }

    #[test]
    fn relabeling_clusters_permutes_reduced_matrices() {
        let (net, rep, q) = paper6_quotient();
        // Swap clusters 0 and 2.
        let relabel = [2usize, 1, 0];
        let assignment = presets::paper6_clustering()
            .assignment()
            .iter()
            .map(|&c| relabel[c])
            .collect();
        let swapped = Clustering::new(assignment, 3).unwrap();
        let q2 = QuotientModel::new(&net, &rep, &swapped).unwrap();
        let mut perm = DMatrix::zeros(3, 3);
        for (old, &new) in relabel.iter().enumerate() {
            perm[(new, old)] = 1.0;
        }
        let w = q.projection_weights(&rep).unwrap();
        let w2 = q2.projection_weights(&rep).unwrap();
        let l1 = q.reduced_system(&w).unwrap();
        let l2 = q2.reduced_system(&w2).unwrap();
        assert_eq!(l2.lap, &perm * &l1.lap * perm.transpose());
        assert_eq!(l2.input, &perm * &l1.input);
        assert_eq!(l2.output, &l1.output * perm.transpose());
    }

    #[test]
    fn single_cluster_quotient_is_empty() {
        let net = presets::paper6();
        let rep = BalancedRepresentation::new(&net).unwrap();
        let q = QuotientModel::new(&net, &rep, &Clustering::single(6)).unwrap();
        assert_eq!(q.num_edges(), 0);
        assert_eq!(q.masses.as_slice(), &[6.0]);
        let p = WeightParameterization::new(&q).unwrap();
        assert_eq!(p.dim(), 0);
        let red = q.reduced_system(&DVector::zeros(0)).unwrap();
        assert_eq!(red.lap, DMatrix::zeros(1, 1));
    }
}
