#![allow(dead_code)]

use fastl0::{generate, SimulationConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GAMMAS: [f64; 3] = [0.8, 0.95, 0.998];
pub const LAMBDAS: [f64; 3] = [0.05, 0.5, 5.0];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Alternates simulated traces with pure uniform noise so that both spiky
/// and featureless inputs are covered.
pub fn random_trace(rng: &mut ChaCha8Rng, len: usize, gamma: f64, case: usize) -> Vec<f64> {
    if case % 2 == 0 {
        let cfg = SimulationConfig {
            amplitude: rng.random_range(0.5..3.0),
            ..SimulationConfig::new(len, gamma, rng.random_range(0.0..0.5), 0.2, rng.random())
        };
        generate(&cfg).unwrap().y
    } else {
        (0..len).map(|_| rng.random_range(-1.0..3.0)).collect()
    }
}

/// `|a − b| ≤ tol·max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
