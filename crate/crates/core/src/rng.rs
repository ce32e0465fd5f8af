//! Reproducible random streams: one ChaCha stream per path index, so batch
//! results do not depend on thread count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type PathRng = ChaCha8Rng;

/// The generator for path `index` under master `seed`.
pub fn path_rng(seed: u64, index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Fills `out` with independent `N(0, dt_k)` increments for the grid.
pub fn brownian_increments<R: Rng + ?Sized>(rng: &mut R, grid: &[f64], out: &mut Vec<f64>) {
    out.clear();
    for w in grid.windows(2) {
        let z: f64 = rng.sample(StandardNormal);
        out.push(z * (w[1] - w[0]).sqrt());
    }
}

/// Uniform grid of `steps` intervals on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
}
