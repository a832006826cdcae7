//! Weighted digraphs, their Laplacian and incidence algebra, and vertex
//! clusterings.
//!
//! Orientation convention: an edge `tail -> head` means `tail` influences
//! `head`. It contributes `+w` to `L[head, head]` and `-w` to
//! `L[head, tail]`, and its incidence column carries `+1` at `head` and `-1`
//! at `tail`, so that `L = B0 * W * B^T`.

use std::collections::{HashSet, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(tail: usize, head: usize, weight: f64) -> Self {
        Self { tail, head, weight }
    }
}

/// A simple weighted digraph with input and output placements.
///
/// `input` is the `n x p` gain matrix `F`, `output` the `q x n` measurement
/// matrix `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedNetwork {
    n: usize,
    edges: Vec<Edge>,
    input: DMatrix<f64>,
    output: DMatrix<f64>,
}

impl DirectedNetwork {
    pub fn new(
        n: usize,
        edges: Vec<Edge>,
        input: DMatrix<f64>,
        output: DMatrix<f64>,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidNetwork("network has no vertices".into()));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            if e.tail >= n || e.head >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge {k} ({} -> {}) references a vertex outside 0..{n}",
                    e.tail, e.head
                )));
            }
            if e.tail == e.head {
                return Err(Error::InvalidNetwork(format!(
                    "edge {k} is a self-loop at vertex {}",
                    e.tail
                )));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {k} ({} -> {}) has nonpositive weight {}",
                    e.tail, e.head, e.weight
                )));
            }
            if !seen.insert((e.tail, e.head)) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate edge {} -> {}",
                    e.tail, e.head
                )));
            }
        }
        if input.nrows() != n {
            return Err(Error::Dimension(format!(
                "input matrix has {} rows, expected {n}",
                input.nrows()
            )));
        }
        if output.ncols() != n {
            return Err(Error::Dimension(format!(
                "output matrix has {} columns, expected {n}",
                output.ncols()
            )));
        }
        if input.iter().chain(output.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidNetwork("non-finite input/output gain".into()));
        }
        Ok(Self {
            n,
            edges,
            input,
            output,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn input(&self) -> &DMatrix<f64> {
        &self.input
    }

    pub fn output(&self) -> &DMatrix<f64> {
        &self.output
    }

    pub fn num_inputs(&self) -> usize {
        self.input.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.output.nrows()
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut lap = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            lap[(e.head, e.head)] += e.weight;
            lap[(e.head, e.tail)] -= e.weight;
        }
        lap
    }

    pub fn incidence(&self) -> IncidenceDecomposition {
        IncidenceDecomposition::from_edges(self.n, &self.edges)
    }

    /// Weighted indegree minus outdegree per vertex, i.e. `B * w`.
    pub fn degree_imbalance(&self) -> DVector<f64> {
        let mut imb = DVector::zeros(self.n);
        for e in &self.edges {
            imb[e.head] += e.weight;
            imb[e.tail] -= e.weight;
        }
        imb
    }

    /// Largest weighted indegree or outdegree.
    pub fn max_degree(&self) -> f64 {
        let mut indeg = vec![0.0; self.n];
        let mut outdeg = vec![0.0; self.n];
        for e in &self.edges {
            indeg[e.head] += e.weight;
            outdeg[e.tail] += e.weight;
        }
        indeg
            .into_iter()
            .chain(outdeg)
            .fold(0.0_f64, |acc, v| acc.max(v))
    }

    pub fn default_balance_tol(&self) -> f64 {
        1e-9 * self.max_degree().max(1.0)
    }

    /// Balance test `||B w||_inf <= tol`. Only meaningful for strongly
    /// connected graphs, so other inputs are rejected.
    pub fn is_balanced(&self, tol: Option<f64>) -> Result<bool> {
        if !self.is_strongly_connected() {
            return Err(Error::NotStronglyConnected);
        }
        let tol = tol.unwrap_or_else(|| self.default_balance_tol());
        Ok(self.degree_imbalance().amax() <= tol)
    }

    pub fn is_strongly_connected(&self) -> bool {
        let mut fwd = vec![Vec::new(); self.n];
        let mut bwd = vec![Vec::new(); self.n];
        for e in &self.edges {
            fwd[e.tail].push(e.head);
            bwd[e.head].push(e.tail);
        }
        reaches_all(&fwd, 0) && reaches_all(&bwd, 0)
    }

    /// Relabels vertices so that old vertex `i` becomes `perm[i]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n)?;
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(perm[e.tail], perm[e.head], e.weight))
            .collect();
        let mut input = DMatrix::zeros(self.n, self.num_inputs());
        let mut output = DMatrix::zeros(self.num_outputs(), self.n);
        for (old, &new) in perm.iter().enumerate() {
            input.set_row(new, &self.input.row(old));
            output.set_column(new, &self.output.column(old));
        }
        Self::new(self.n, edges, input, output)
    }

    /// The same graph with its edge weights replaced.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.edges.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} edges",
                weights.len(),
                self.edges.len()
            )));
        }
        let edges = self
            .edges
            .iter()
            .zip(weights)
            .map(|(e, &w)| Edge::new(e.tail, e.head, w))
            .collect();
        Self::new(self.n, edges, self.input.clone(), self.output.clone())
    }
}

fn reaches_all(adj: &[Vec<usize>], start: usize) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == adj.len()
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::Dimension(format!("not a permutation of 0..{n}")));
    }
    Ok(())
}

/// Signed incidence matrix `B`, its nonnegative part `B0`, and edge weights.
/// Column `k` corresponds to `edges[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceDecomposition {
    pub b: DMatrix<f64>,
    pub b0: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub edges: Vec<(usize, usize)>,
}

impl IncidenceDecomposition {
    pub fn from_edges(n: usize, edges: &[Edge]) -> Self {
        let m = edges.len();
        let mut b = DMatrix::zeros(n, m);
        let mut b0 = DMatrix::zeros(n, m);
        for (k, e) in edges.iter().enumerate() {
            b[(e.head, k)] = 1.0;
            b[(e.tail, k)] = -1.0;
            b0[(e.head, k)] = 1.0;
        }
        Self {
            b,
            b0,
            weights: DVector::from_iterator(m, edges.iter().map(|e| e.weight)),
            edges: edges.iter().map(|e| (e.tail, e.head)).collect(),
        }
    }

    /// `B0 * Diag(w) * B^T`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        weighted_laplacian(&self.b0, &self.weights, &self.b)
    }
}

/// `B0 * Diag(w) * B^T` without forming the diagonal matrix.
pub fn weighted_laplacian(b0: &DMatrix<f64>, w: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = b0.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= w[k];
    }
    scaled * b.transpose()
}

/// Partition of `0..n` into `r` nonempty clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    assignment: Vec<usize>,
    r: usize,
}

impl Clustering {
    /// `assignment[v]` is the cluster of vertex `v`, in `0..r`.
    pub fn new(assignment: Vec<usize>, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidClustering("zero clusters".into()));
        }
        let mut sizes = vec![0usize; r];
        for (v, &c) in assignment.iter().enumerate() {
            if c >= r {
                return Err(Error::InvalidClustering(format!(
                    "vertex {v} assigned to cluster {c}, but only {r} clusters"
                )));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidClustering(format!("cluster {empty} is empty")));
        }
        Ok(Self { assignment, r })
    }

    /// Builds a clustering from explicit vertex groups; every vertex of
    /// `0..n` must appear exactly once.
    pub fn from_groups(groups: &[Vec<usize>], n: usize) -> Result<Self> {
        let mut assignment = vec![usize::MAX; n];
        for (c, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::InvalidClustering(format!("cluster {c} is empty")));
            }
            for &v in group {
                if v >= n {
                    return Err(Error::InvalidClustering(format!(
                        "vertex {v} out of range 0..{n}"
                    )));
                }
                if assignment[v] != usize::MAX {
                    return Err(Error::InvalidClustering(format!(
                        "vertex {v} assigned more than once"
                    )));
                }
                assignment[v] = c;
            }
        }
        if let Some(v) = assignment.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidClustering(format!("vertex {v} is unassigned")));
        }
        Self::new(assignment, groups.len())
    }

    pub fn identity(n: usize) -> Self {
        Self {
            assignment: (0..n).collect(),
            r: n,
        }
    }

    pub fn single(n: usize) -> Self {
        Self {
            assignment: vec![0; n],
            r: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.r];
        for (v, &c) in self.assignment.iter().enumerate() {
            groups[c].push(v);
        }
        groups
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.r];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }

    /// Binary `n x r` matrix with `Pi[v, c] = 1` iff vertex `v` is in cluster `c`.
    pub fn characteristic_matrix(&self) -> DMatrix<f64> {
        let mut pi = DMatrix::zeros(self.n(), self.r);
        for (v, &c) in self.assignment.iter().enumerate() {
            pi[(v, c)] = 1.0;
        }
        pi
    }

    /// The clustering seen through a vertex relabeling `old -> perm[old]`.
    pub fn relabeled(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.n())?;
        let mut assignment = vec![0; self.n()];
        for (old, &new) in perm.iter().enumerate() {
            assignment[new] = self.assignment[old];
        }
        Self::new(assignment, self.r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn no_io(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        (DMatrix::zeros(n, 1), DMatrix::zeros(1, n))
    }

    fn net(n: usize, edges: &[(usize, usize, f64)]) -> Result<DirectedNetwork> {
        let (f, h) = no_io(n);
        DirectedNetwork::new(
            n,
            edges.iter().map(|&(t, h, w)| Edge::new(t, h, w)).collect(),
            f,
            h,
        )
    }

    // Direct accumulation from the adjacency definition: A[i][j] is the
    // weight of edge j -> i, L[i][i] = sum_j A[i][j], L[i][j] = -A[i][j].
    fn laplacian_oracle(net: &DirectedNetwork) -> Vec<Vec<f64>> {
        let n = net.n();
        let mut adj = vec![vec![0.0; n]; n];
        for e in net.edges() {
            adj[e.head][e.tail] = e.weight;
        }
        let mut lap = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    lap[i][i] = (0..n).filter(|&k| k != i).map(|k| adj[i][k]).sum();
                } else {
                    lap[i][j] = -adj[i][j];
                }
            }
        }
        lap
    }

    fn closure_oracle(n: usize, edges: &[(usize, usize)]) -> bool {
        let mut reach = vec![vec![false; n]; n];
        for i in 0..n {
            reach[i][i] = true;
        }
        for &(t, h) in edges {
            reach[t][h] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if reach[i][k] && reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
        reach.iter().all(|row| row.iter().all(|&x| x))
    }

    #[test]
    fn paper6_laplacian_matches_printed_matrix() {
        let net = presets::paper6();
        let expected = DMatrix::from_row_slice(
            6,
            6,
            &[
                2., -2., 0., 0., 0., 0., //
                -1., 3., 0., 0., 0., -2., //
                0., -1., 4., -2., -1., 0., //
                0., 0., 0., 2., -2., 0., //
                0., 0., -3., 0., 3., 0., //
                -1., 0., -1., 0., 0., 2.,
            ],
        );
        assert_eq!(net.laplacian(), expected);
    }

    #[test]
    fn single_edge_laplacian_and_incidence() {
        let net = net(2, &[(1, 0, 3.0)]).unwrap();
        assert_eq!(net.laplacian(), DMatrix::from_row_slice(2, 2, &[3., -3., 0., 0.]));
        let inc = net.incidence();
        assert_eq!(inc.b, DMatrix::from_column_slice(2, 1, &[1., -1.]));
        assert_eq!(inc.b0, DMatrix::from_column_slice(2, 1, &[1., 0.]));
        assert_eq!(inc.weights.as_slice(), &[3.0]);
    }

    #[test]
    fn paper6_incidence_matches_printed_matrix() {
        let inc = presets::paper6().incidence();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(6, 10, &[
            1., -1., 0., 0., 0., 0., 0., 0., -1., 0.,
            -1., 1., 1., -1., 0., 0., 0., 0., 0., 0.,
            0., 0., 0., 1., 1., 1., 0., -1., 0., -1.,
            0., 0., 0., 0., -1., 0., 1., 0., 0., 0.,
            0., 0., 0., 0., 0., -1., -1., 1., 0., 0.,
            0., 0., -1., 0., 0., 0., 0., 0., 1., 1.,
        ]);
        assert_eq!(inc.b, expected);
        assert_eq!(inc.laplacian(), presets::paper6().laplacian());
    }

    #[test]
    fn random_laplacians_match_accumulation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let net = presets::random_strong(8, 10, &mut rng);
            let lap = net.laplacian();
            let oracle = laplacian_oracle(&net);
            for i in 0..8 {
                for j in 0..8 {
                    assert!((lap[(i, j)] - oracle[i][j]).abs() <= 1e-14);
                }
            }
            let scale = lap.amax();
            assert!((&lap * DVector::repeat(8, 1.0)).amax() <= 1e-12 * scale);
            let recon = net.incidence().laplacian();
            assert!((recon - &lap).amax() <= 1e-12 * scale);
            for i in 0..8 {
                for j in 0..8 {
                    if i != j {
                        assert!(lap[(i, j)] <= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn incidence_columns_have_one_plus_and_one_minus() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = presets::random_strong(9, 12, &mut rng);
        let inc = net.incidence();
        for col in inc.b.column_iter() {
            assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == -1.0).count(), 1);
            assert_eq!(col.iter().filter(|&&v| v == 0.0).count(), 7);
        }
        assert_eq!(inc.b0, inc.b.map(|v| v.max(0.0)));
    }

    #[test]
    fn rejects_self_loops_duplicates_and_bad_weights() {
        assert!(matches!(net(2, &[(0, 0, 1.0)]), Err(Error::InvalidNetwork(_))));
        assert!(matches!(net(2, &[(0, 1, 0.0)]), Err(Error::InvalidNetwork(_))));
        assert!(matches!(net(2, &[(0, 1, -1.0)]), Err(Error::InvalidNetwork(_))));
        assert!(matches!(
            net(2, &[(0, 1, 1.0), (0, 1, 2.0)]),
            Err(Error::InvalidNetwork(_))
        ));
        assert!(matches!(net(2, &[(0, 2, 1.0)]), Err(Error::InvalidNetwork(_))));
    }

    #[test]
    fn balance_examples() {
        assert!(presets::paper6().is_balanced(None).unwrap());
        assert!(net(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap().is_balanced(None).unwrap());
        // 2-cycle (1, 2) plus a bypass through a third vertex.
        let unbalanced = net(3, &[(0, 1, 1.0), (1, 0, 2.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap();
        assert!(unbalanced.is_strongly_connected());
        let oracle_balanced = {
            let mut indeg = [0.0; 3];
            let mut outdeg = [0.0; 3];
            for e in unbalanced.edges() {
                indeg[e.head] += e.weight;
                outdeg[e.tail] += e.weight;
            }
            (0..3).all(|i| indeg[i] == outdeg[i])
        };
        assert!(!oracle_balanced);
        assert!(!unbalanced.is_balanced(None).unwrap());
    }

    #[test]
    fn balance_test_rejects_non_strongly_connected() {
        let chain = net(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(chain.is_balanced(None), Err(Error::NotStronglyConnected));
    }

    #[test]
    fn balance_agrees_with_kernel_test() {
        // Balanced iff 1^T L = 0 for strongly connected graphs.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..200 {
            let mut net = presets::random_balanced(7, 3, &mut rng);
            if k % 2 == 1 {
                let mut w: Vec<f64> = net.edges().iter().map(|e| e.weight).collect();
                let idx = rng.gen_range(0..w.len());
                w[idx] *= 1.5;
                net = net.with_weights(&w).unwrap();
            }
            let lap = net.laplacian();
            let col_sums = lap.row_sum();
            let kernel_balanced = col_sums.amax() <= 1e-9 * lap.amax();
            assert_eq!(net.is_balanced(None).unwrap(), kernel_balanced);
            assert_eq!(kernel_balanced, k % 2 == 0);
        }
    }

    #[test]
    fn strong_connectivity_examples() {
        assert!(presets::paper6().is_strongly_connected());
        let two_cycles = net(4, &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]).unwrap();
        assert!(!two_cycles.is_strongly_connected());
    }

    #[test]
    fn tournaments_match_transitive_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut strong = 0;
        for _ in 0..300 {
            let mut edges = Vec::new();
            for i in 0..7 {
                for j in (i + 1)..7 {
                    if rng.gen_bool(0.5) {
                        edges.push((i, j, 1.0));
                    } else {
                        edges.push((j, i, 1.0));
                    }
                }
            }
            let g = net(7, &edges).unwrap();
            let pairs: Vec<_> = edges.iter().map(|&(t, h, _)| (t, h)).collect();
            let expected = closure_oracle(7, &pairs);
            strong += expected as usize;
            assert_eq!(g.is_strongly_connected(), expected);
        }
        assert!(strong > 0 && strong < 300);
    }

    #[test]
    fn characteristic_matrix_examples() {
        let c = presets::paper6_clustering();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(6, 3, &[
            1., 0., 0.,
            1., 0., 0.,
            0., 1., 0.,
            0., 1., 0.,
            0., 1., 0.,
            0., 0., 1.,
        ]);
        let pi = c.characteristic_matrix();
        assert_eq!(pi, expected);
        assert_eq!(pi.column_sum(), DVector::repeat(6, 1.0));
        assert_eq!(pi.row_sum().as_slice(), &[2.0, 3.0, 1.0]);
        assert_eq!(Clustering::identity(4).characteristic_matrix(), DMatrix::identity(4, 4));
        assert_eq!(Clustering::single(4).characteristic_matrix(), DMatrix::repeat(4, 1, 1.0));
    }

    #[test]
    fn clustering_validation() {
        assert!(Clustering::new(vec![0, 2, 2], 3).is_err());
        assert!(Clustering::new(vec![0, 3], 3).is_err());
        assert!(Clustering::from_groups(&[vec![0, 1], vec![]], 2).is_err());
        assert!(Clustering::from_groups(&[vec![0, 1], vec![1]], 2).is_err());
        assert!(Clustering::from_groups(&[vec![0]], 2).is_err());
        let c = Clustering::from_groups(&[vec![2], vec![0, 1]], 3).unwrap();
        assert_eq!(c.assignment(), &[1, 1, 0]);
        assert_eq!(c.groups(), vec![vec![2], vec![0, 1]]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn relabeling_conjugates_laplacian_and_clustering(seed in 0u64..10_000, shuffle_seed in 0u64..10_000) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let net = presets::random_strong(7, 6, &mut rng);
                let clustering = presets::random_clustering(7, 3, &mut rng);
                let perm = presets::random_permutation(7, &mut ChaCha8Rng::seed_from_u64(shuffle_seed));
                let mut p = DMatrix::zeros(7, 7);
                for (old, &new) in perm.iter().enumerate() {
                    p[(new, old)] = 1.0;
                }
                let relabeled = net.relabeled(&perm).unwrap();
                prop_assert_eq!(relabeled.laplacian(), &p * net.laplacian() * p.transpose());
                prop_assert_eq!(relabeled.input(), &(&p * net.input()));
                let pi = clustering.relabeled(&perm).unwrap().characteristic_matrix();
                prop_assert_eq!(pi, &p * clustering.characteristic_matrix());
            }
        }
    }
}
