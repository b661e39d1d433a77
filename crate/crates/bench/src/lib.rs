//! Shared fixtures for the criterion benches.

use kerf::{Dataset, RandomSource, SyntheticModel};

/// Model 1 sample of the given size and dimension.
pub fn model1(n: usize, d: usize, seed: u64) -> Dataset {
    SyntheticModel::with_size(1, n, d)
        .and_then(|m| m.generate(&mut RandomSource::new(seed, 0)))
        .expect("model 1 parameters are valid")
}

/// `count` pseudo-random points of `[0,1]^d`.
pub fn points(count: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    model1(count, d.max(2), seed)
        .points()
        .map(|p| p[..d].to_vec())
        .collect()
}
