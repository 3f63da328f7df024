//! Gaussian-process surrogate with an isotropic Matérn-5/2 kernel.
//!
//! Objectives are standardized to zero mean and unit variance, so the
//! signal variance is 1 in standardized units. The length-scale is picked
//! from a fixed log grid by log marginal likelihood.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const NOISE_JITTER: f64 = 1e-6;
pub const LENGTH_SCALE_MIN: f64 = 0.05;
pub const LENGTH_SCALE_MAX: f64 = 2.0;
pub const LENGTH_SCALE_STEPS: usize = 16;

/// Log-spaced length-scale candidates.
pub fn length_scale_grid() -> Vec<f64> {
    let (lo, hi) = (LENGTH_SCALE_MIN.ln(), LENGTH_SCALE_MAX.ln());
    (0..LENGTH_SCALE_STEPS)
        .map(|i| (lo + (hi - lo) * i as f64 / (LENGTH_SCALE_STEPS - 1) as f64).exp())
        .collect()
}

pub fn matern52(r: f64, length_scale: f64, variance: f64) -> f64 {
    let s = 5f64.sqrt() * r / length_scale;
    variance * (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct GpSurrogate {
    inputs: Vec<Vec<f64>>,
    objectives: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    length_scale: f64,
    signal_variance: f64,
    noise: f64,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    log_likelihood: f64,
    flat: bool,
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    noise: f64,
    log_likelihood: f64,
}

fn factor(inputs: &[Vec<f64>], y: &DVector<f64>, length_scale: f64) -> Option<Factor> {
    let n = inputs.len();
    let mut noise = NOISE_JITTER;
    while noise <= 1e-2 {
        let k = DMatrix::from_fn(n, n, |i, j| {
            matern52(distance(&inputs[i], &inputs[j]), length_scale, 1.0) + if i == j { noise } else { 0.0 }
        });
        if let Some(chol) = k.cholesky() {
            let weights = chol.solve(y);
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let log_likelihood =
                -0.5 * y.dot(&weights) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Some(Factor { chol, weights, noise, log_likelihood });
        }
        noise *= 10.0;
    }
    None
}

impl GpSurrogate {
    /// Fits the surrogate, choosing the length-scale by marginal likelihood.
    pub fn fit(inputs: &[Vec<f64>], objectives: &[f64]) -> Result<Self> {
        Self::fit_over(inputs, objectives, &length_scale_grid())
    }

    /// Fits with a fixed length-scale.
    pub fn fit_with_length_scale(inputs: &[Vec<f64>], objectives: &[f64], length_scale: f64) -> Result<Self> {
        Self::fit_over(inputs, objectives, &[length_scale])
    }

    fn fit_over(inputs: &[Vec<f64>], objectives: &[f64], grid: &[f64]) -> Result<Self> {
        if inputs.len() < 2 || inputs.len() != objectives.len() {
            return Err(Error::validation(format!(
                "GP needs at least two paired observations, got {} inputs and {} objectives",
                inputs.len(),
                objectives.len()
            )));
        }
        let dims = inputs[0].len();
        if inputs.iter().any(|x| x.len() != dims || x.iter().any(|v| !v.is_finite())) {
            return Err(Error::validation("GP inputs must be finite and share one dimension"));
        }
        if objectives.iter().any(|y| !y.is_finite()) {
            return Err(Error::validation("GP objectives must be finite"));
        }
        let n = objectives.len() as f64;
        let y_mean = objectives.iter().sum::<f64>() / n;
        let var = objectives.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n;
        let flat = var.sqrt() < 1e-12;
        let y_scale = if flat { 1.0 } else { var.sqrt() };
        let y = DVector::from_iterator(objectives.len(), objectives.iter().map(|v| (v - y_mean) / y_scale));

        let mut best: Option<(f64, Factor)> = None;
        for &ls in grid {
            if let Some(f) = factor(inputs, &y, ls) {
                if best.as_ref().is_none_or(|(_, b)| f.log_likelihood > b.log_likelihood) {
                    best = Some((ls, f));
                }
            }
        }
        let (length_scale, f) =
            best.ok_or_else(|| Error::validation("GP kernel matrix is not positive definite for any length-scale"))?;
        Ok(Self {
            inputs: inputs.to_vec(),
            objectives: objectives.to_vec(),
            y_mean,
            y_scale,
            length_scale,
            signal_variance: 1.0,
            noise: f.noise,
            chol: f.chol,
            weights: f.weights,
            log_likelihood: f.log_likelihood,
            flat,
        })
    }

    /// Posterior mean and variance in standardized units.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| matern52(distance(xi, x), self.length_scale, self.signal_variance)),
        );
        let mean = k.dot(&self.weights);
        let v = self.chol.l().solve_lower_triangular(&k).expect("triangular factor is invertible");
        let var = self.signal_variance - v.dot(&v);
        // small negative values are round-off
        (mean, var.max(0.0))
    }

    /// Posterior mean and variance in the original objective units.
    pub fn predict_raw(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict(x);
        (self.y_mean + self.y_scale * m, v * self.y_scale * self.y_scale)
    }

    pub fn standardize(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_scale
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    /// Diagonal jitter actually used; raised above [`NOISE_JITTER`] only if
    /// the kernel matrix needed it.
    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// All observed objectives were equal: the surrogate carries no signal.
    pub fn is_flat(&self) -> bool {
        self.flat
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn objectives(&self) -> &[f64] {
        &self.objectives
    }

    /// Best observed objective in standardized units.
    pub fn best_standardized(&self) -> f64 {
        self.objectives.iter().map(|&y| self.standardize(y)).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spans_bounds() {
        let g = length_scale_grid();
        assert_eq!(g.len(), 16);
        assert!((g[0] - 0.05).abs() < 1e-12 && (g[15] - 2.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn matern_at_zero_is_variance() {
        assert_eq!(matern52(0.0, 0.3, 2.5), 2.5);
        assert!(matern52(10.0, 0.3, 1.0) < 1e-20);
    }

    #[test]
    fn two_points_are_interpolated() {
        let x = vec![vec![0.2, 0.3], vec![0.8, 0.6]];
        let y = [0.4, 0.9];
        let gp = GpSurrogate::fit(&x, &y).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            let (m, _) = gp.predict(xi);
            assert!((m - gp.standardize(yi)).abs() < 1e-3);
            let (raw, _) = gp.predict_raw(xi);
            assert!((raw - yi).abs() < 1e-3);
        }
    }

    #[test]
    fn far_queries_revert_to_prior() {
        let x = vec![vec![0.0], vec![0.05], vec![0.1]];
        let y = [1.0, 2.0, 4.0];
        let gp = GpSurrogate::fit_with_length_scale(&x, &y, 0.05).unwrap();
        let (m, v) = gp.predict(&[50.0]);
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
        let (raw, _) = gp.predict_raw(&[50.0]);
        assert!((raw - 7.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn flat_objectives_are_flagged() {
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let gp = GpSurrogate::fit(&x, &[0.7, 0.7, 0.7]).unwrap();
        assert!(gp.is_flat());
        let (m, v) = gp.predict_raw(&[0.3]);
        assert!((m - 0.7).abs() < 1e-12);
        assert!(v >= 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(GpSurrogate::fit(&[vec![0.1]], &[1.0]).is_err());
        assert!(GpSurrogate::fit(&[vec![0.1], vec![0.2, 0.3]], &[1.0, 2.0]).is_err());
        assert!(GpSurrogate::fit(&[vec![0.1], vec![0.2]], &[1.0, f64::NAN]).is_err());
    }
}
