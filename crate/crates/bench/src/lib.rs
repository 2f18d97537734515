//! Fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use robcred::ConditionalModel;

/// Sorted exponential losses with unit mean.
pub fn sorted_losses(n: usize, seed: u64) -> Vec<f64> {
    let model = ConditionalModel::exponential(1.0).expect("valid model");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = model.sample(&mut rng, n);
    xs.sort_by(f64::total_cmp);
    xs
}
