#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wishart_sum::halfdeg::HalfDegenerateModel;

/// Composite Simpson on [a, b] with `panels` (even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, panels: usize, f: F) -> f64 {
    let panels = panels + panels % 2;
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for k in 1..panels {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn nine_channel_sigma_b() -> Vec<f64> {
    vec![0.02, 0.20, 0.30, 1.50, 2.01, 2.25, 2.27, 4.05, 4.13]
}

/// Random model with well separated σ_B in [0.2, 3].
pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> HalfDegenerateModel {
    let n_a = n + rng.random_range(0..5);
    let n_b = n + rng.random_range(0..5);
    let sigma_a = rng.random_range(0.5..2.0);
    let mut sb: Vec<f64> = Vec::new();
    while sb.len() < n {
        let s: f64 = rng.random_range(0.2..3.0);
        if sb.iter().all(|t| (t - s).abs() > 0.05) && (s - sigma_a).abs() > 0.05 {
            sb.push(s);
        }
    }
    HalfDegenerateModel::new(n_a, n_b, sigma_a, sb).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Upper integration limit past which a model's density is negligible.
pub fn tail_end(model: &HalfDegenerateModel) -> f64 {
    let smax = model.sigma_b.iter().copied().fold(model.sigma_a, f64::max);
    let peak = (model.n_a + model.n_b) as f64 * smax;
    2.0 * peak + 60.0 * smax
}
