//! Shared input builders for the benchmark targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mmcl_core::{partition_queries, CostMatrix, Matrix, PartitionSpec};

/// A standard-normal query matrix with its partition.
pub fn random_queries(n: usize, k: usize, d: usize, seed: u64) -> (Matrix, PartitionSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Matrix::zeros(n, d);
    for v in q.data_mut() {
        *v = rng.sample::<f64, _>(rand_distr::StandardNormal);
    }
    (q, partition_queries(n, k).expect("valid shape"))
}

/// A uniform cost matrix; `quantized` snaps entries onto a 5-value grid so
/// ties are common.
pub fn random_costs(rows: usize, cols: usize, quantized: bool, seed: u64) -> CostMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = CostMatrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = if quantized {
            f64::from(rng.random_range(0..=4u32)) * 0.25
        } else {
            rng.random_range(0.0..1.0)
        };
    }
    m
}
