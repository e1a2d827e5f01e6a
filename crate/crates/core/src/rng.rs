//! Seeded randomness shared by the solvers and the Monte Carlo diagnostics.
//!
//! Every stream is a ChaCha8 generator seeded from a 64-bit integer, so runs are
//! reproducible within a build. Index draws use rand's unbiased bounded
//! sampling; normals come from `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform index in `0..n`.
#[inline]
pub fn draw_index(rng: &mut SeededRng, n: usize) -> usize {
    rng.random_range(0..n)
}

pub fn standard_normal(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn normal_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

/// Uniform point in the Euclidean ball of `radius` around `center`:
/// a normalized Gaussian direction scaled by `radius · u^{1/n}`.
pub fn uniform_in_ball(rng: &mut SeededRng, center: &[f64], radius: f64) -> Vec<f64> {
    let n = center.len();
    let mut dir = normal_vec(rng, n);
    let norm = crate::linalg::norm2(&dir);
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / n as f64);
    let scale = if norm > 0.0 { r / norm } else { 0.0 };
    for (d, c) in dir.iter_mut().zip(center) {
        *d = c + scale * *d;
    }
    dir
}
