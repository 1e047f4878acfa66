//! Fixtures shared by the benchmarks.

use dmrr_core::DataMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` samples in two groups, with the first `informative` features shifted
/// by group and the rest uniform noise.
pub fn synthetic(n: usize, d: usize, informative: usize, seed: u64) -> DataMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let shift = if i < n / 2 { -1.0 } else { 1.0 };
            (0..d)
                .map(|j| {
                    let noise: f64 = rng.random_range(-1.0..1.0);
                    if j < informative {
                        shift + 0.1 * noise
                    } else {
                        3.0 * noise
                    }
                })
                .collect()
        })
        .collect();
    DataMatrix::from_rows(&rows).expect("synthetic data is finite and non-degenerate")
}
