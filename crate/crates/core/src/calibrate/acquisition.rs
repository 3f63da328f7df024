//! Expected improvement and its maximization over the unit cube.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use libm::erfc;

use super::design::shifted_halton;
use super::gp::GpSurrogate;

/// Exploration offset in standardized objective units.
pub const XI: f64 = 0.01;
pub const CANDIDATES: usize = 2048;
pub const REFINEMENTS: usize = 8;

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement of a Gaussian `N(mean, variance)` over `best + xi`.
pub fn expected_improvement_from(mean: f64, variance: f64, best: f64, xi: f64) -> f64 {
    let gain = mean - best - xi;
    let sd = variance.max(0.0).sqrt();
    if sd <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sd;
    (gain * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

/// EI at `query` against `best_so_far`, both in standardized units.
pub fn expected_improvement(surrogate: &GpSurrogate, query: &[f64], best_so_far: f64) -> f64 {
    let (m, v) = surrogate.predict(query);
    expected_improvement_from(m, v, best_so_far, XI)
}

fn argmax<F: Fn(&[f64]) -> f64>(points: &[Vec<f64>], f: F) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let v = f(p);
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Next point to evaluate, in the unit cube.
///
/// EI is evaluated on [`CANDIDATES`] shifted-Halton points, then the winner is
/// polished by [`REFINEMENTS`] rounds of coordinate search with halving step.
/// A flat surrogate, or one whose EI has underflowed everywhere, falls back to
/// the candidate with the largest posterior variance.
pub fn propose_next(surrogate: &GpSurrogate, dims: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = shifted_halton(CANDIDATES, dims, &mut rng);
    let variance = |x: &[f64]| surrogate.predict(x).1;

    if surrogate.is_flat() {
        return candidates[argmax(&candidates, variance).0].clone();
    }
    let best = surrogate.best_standardized();
    let ei = |x: &[f64]| expected_improvement(surrogate, x, best);
    let (i, top) = argmax(&candidates, ei);
    if top <= 1e-300 {
        return candidates[argmax(&candidates, variance).0].clone();
    }

    let mut x = candidates[i].clone();
    let mut value = top;
    let mut step = 0.1;
    for _ in 0..REFINEMENTS {
        for d in 0..dims {
            for dir in [-1.0, 1.0] {
                let mut trial = x.clone();
                trial[d] = (trial[d] + dir * step).clamp(0.0, 1.0);
                let v = ei(&trial);
                if v > value {
                    value = v;
                    x = trial;
                }
            }
        }
        step *= 0.5;
    }
    x
}
