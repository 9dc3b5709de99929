//! Shared fixtures for the benchmarks.

use kmon_core::rng::stream_rng;
use rand_distr::{Distribution, StandardNormal};

/// `n` standard normal vectors of dimension `d`.
pub fn gaussian_sample(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, &[]);
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}
