//! Random inputs shared by the benchmarks.

use rand::Rng;

use graphtricks::nn::seeded_rng;
use graphtricks::{build_csr, BuildOptions, CsrGraph, DenseMatrix};

/// Undirected random graph with about `avg_degree` neighbors per node.
pub fn random_graph(n: usize, avg_degree: usize, seed: u64) -> CsrGraph {
    let mut rng = seeded_rng(seed, 0);
    let edges: Vec<(usize, usize)> = (0..n * avg_degree / 2)
        .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
        .filter(|(i, j)| i != j)
        .collect();
    build_csr(&edges, n, BuildOptions::undirected()).expect("valid edge list")
}

/// Uniform entries in `[-1, 1)`.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = seeded_rng(seed, 1);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}
