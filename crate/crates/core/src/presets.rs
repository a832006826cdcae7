//! Bundled example networks and seeded random generators.
//!
//! Random weights are drawn from `{0.5, 0.5625, ..., 2.0}` (multiples of
//! 1/16), so they and their sums are exact in binary and survive a decimal
//! round trip unchanged.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{Clustering, DirectedNetwork, Edge};

/// The six-vertex balanced vehicle-formation network: input on vertex 4,
/// output on vertex 1 (1-based).
pub fn paper6() -> DirectedNetwork {
    // (tail, head, weight), 1-based, in incidence column order.
    const EDGES: [(usize, usize, f64); 10] = [
        (2, 1, 2.0),
        (1, 2, 1.0),
        (6, 2, 2.0),
        (2, 3, 1.0),
        (4, 3, 2.0),
        (5, 3, 1.0),
        (5, 4, 2.0),
        (3, 5, 3.0),
        (1, 6, 1.0),
        (3, 6, 1.0),
    ];
    let edges = EDGES
        .iter()
        .map(|&(t, h, w)| Edge::new(t - 1, h - 1, w))
        .collect();
    let mut input = DMatrix::zeros(6, 1);
    input[(3, 0)] = 1.0;
    let mut output = DMatrix::zeros(1, 6);
    output[(0, 0)] = 1.0;
    DirectedNetwork::new(6, edges, input, output).expect("preset is valid")
}

/// Clusters {1,2}, {3,4,5}, {6} (1-based).
pub fn paper6_clustering() -> Clustering {
    Clustering::from_groups(&[vec![0, 1], vec![2, 3, 4], vec![5]], 6).expect("preset is valid")
}

/// The 5 x 8 quotient incidence matrix of the 14-vertex sensor network
/// example. Only the quotient is available; the underlying network is not.
pub fn sensor14_quotient_incidence() -> DMatrix<f64> {
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(5, 8, &[
        1., 1., -1., -1., 0., 0., 0., -1.,
        -1., 0., 1., 0., 0., 0., 0., 0.,
        0., -1., 0., 1., 1., 1., -1., 0.,
        0., 0., 0., 0., -1., 0., 1., 0.,
        0., 0., 0., 0., 0., -1., 0., 1.,
    ]);
    b
}

/// Projection weights of the sensor network example, as printed (4 digits).
pub const SENSOR14_INITIAL_WEIGHTS: [f64; 8] =
    [0.6803, 0.2268, 0.6803, 0.0756, 0.0756, 0.1512, 0.0756, 0.1512];

/// Optimized weights of the sensor network example, as printed (4 digits).
pub const SENSOR14_OPTIMIZED_WEIGHTS: [f64; 8] =
    [0.6826, 0.2394, 0.6826, 0.0948, 0.0537, 0.1446, 0.0537, 0.1446];

fn random_weight<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(8..=32) as f64 / 16.0
}

pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Unit gains on `p` distinct input vertices and `q` distinct output
/// vertices.
pub fn random_io<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    q: usize,
    rng: &mut R,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut input = DMatrix::zeros(n, p);
    for (ch, &v) in random_permutation(n, rng).iter().take(p).enumerate() {
        input[(v, ch)] = 1.0;
    }
    let mut output = DMatrix::zeros(q, n);
    for (ch, &v) in random_permutation(n, rng).iter().take(q).enumerate() {
        output[(ch, v)] = 1.0;
    }
    (input, output)
}

fn assemble<R: Rng + ?Sized>(
    n: usize,
    weights: BTreeMap<(usize, usize), f64>,
    rng: &mut R,
) -> DirectedNetwork {
    let edges = weights
        .into_iter()
        .map(|((t, h), w)| Edge::new(t, h, w))
        .collect();
    let p = 1 + usize::from(n > 3 && rng.gen_bool(0.5));
    let q = 1 + usize::from(n > 3 && rng.gen_bool(0.5));
    let (input, output) = random_io(n, p, q, rng);
    DirectedNetwork::new(n, edges, input, output).expect("generated network is valid")
}

/// A balanced strongly connected digraph: a Hamiltonian cycle plus
/// `extra_cycles` random cycles, each with a random uniform weight.
pub fn random_balanced<R: Rng + ?Sized>(
    n: usize,
    extra_cycles: usize,
    rng: &mut R,
) -> DirectedNetwork {
    assert!(n >= 2, "need at least two vertices");
    let mut weights = BTreeMap::new();
    let mut add_cycle = |cycle: &[usize], w: f64| {
        for k in 0..cycle.len() {
            let (t, h) = (cycle[k], cycle[(k + 1) % cycle.len()]);
            *weights.entry((t, h)).or_insert(0.0) += w;
        }
    };
    let ham = random_permutation(n, rng);
    let w = random_weight(rng);
    add_cycle(&ham, w);
    for _ in 0..extra_cycles {
        let len = rng.gen_range(2..=n);
        let perm = random_permutation(n, rng);
        let w = random_weight(rng);
        add_cycle(&perm[..len], w);
    }
    assemble(n, weights, rng)
}

/// A strongly connected digraph, generally unbalanced: a Hamiltonian cycle
/// plus up to `extra_edges` random edges.
pub fn random_strong<R: Rng + ?Sized>(
    n: usize,
    extra_edges: usize,
    rng: &mut R,
) -> DirectedNetwork {
    assert!(n >= 2, "need at least two vertices");
    let mut weights = BTreeMap::new();
    let ham = random_permutation(n, rng);
    for k in 0..n {
        weights.insert((ham[k], ham[(k + 1) % n]), random_weight(rng));
    }
    for _ in 0..extra_edges {
        let t = rng.gen_range(0..n);
        let h = rng.gen_range(0..n);
        if t != h {
            weights.entry((t, h)).or_insert_with(|| random_weight(rng));
        }
    }
    assemble(n, weights, rng)
}

/// A uniformly shuffled clustering with `r` nonempty clusters.
pub fn random_clustering<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Clustering {
    assert!((1..=n).contains(&r), "need 1 <= r <= n");
    let perm = random_permutation(n, rng);
    let mut assignment = vec![0; n];
    for (k, &v) in perm.iter().enumerate() {
        assignment[v] = if k < r { k } else { rng.gen_range(0..r) };
    }
    Clustering::new(assignment, r).expect("every cluster is seeded")
}
