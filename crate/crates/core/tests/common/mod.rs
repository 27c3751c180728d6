//! Shared fixtures for the integration tests.
#![allow(dead_code)] // each test target uses a different subset

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relight_core::image::{Image, Map};

/// Noiseless synthetic: smooth vertical illumination ramp times a seeded
/// piecewise-constant reflectance, `I = R* ∘ L*`.
pub fn noiseless_synthetic(seed: u64, size: usize) -> (Image, Map, Image) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = [0.2, 0.45, 0.7, 0.95];
    let block = 8;
    let blocks_per_side = size / block;
    let n_blocks = blocks_per_side * blocks_per_side;
    let choices: Vec<f64> = (0..n_blocks * 3)
        .map(|_| levels[rng.gen_range(0..levels.len())])
        .collect();

    let l_star = Map::from_fn(size, size, |_, y| 0.3 + 0.6 * y as f64 / (size - 1) as f64);
    let mut r_star = Image::zeros(size, size, 3);
    let mut observed = Image::zeros(size, size, 3);
    for y in 0..size {
        for x in 0..size {
            let b = (y / block) * blocks_per_side + x / block;
            for c in 0..3 {
                let r = choices[b * 3 + c];
                r_star.set(x, y, c, r);
                observed.set(x, y, c, r * l_star.get(x, y));
            }
        }
    }
    (observed, l_star, r_star)
}

/// Seeded standard normal draws via Box-Muller.
pub fn gaussian_noise(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count)
        .map(|_| {
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}
