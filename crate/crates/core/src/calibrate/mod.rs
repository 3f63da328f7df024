//! Bayesian optimization of the weighted SW+ATR hyperparameters
//! `(w, alpha, beta)` for calibration-split AUROC, followed by Youden
//! threshold selection on the same split.
//!
//! The search runs on the unit cube `[0, 1]^9`; the integer window length is
//! a continuous coordinate for the surrogate and is rounded only when the
//! objective is evaluated.

mod acquisition;
mod design;
mod gp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{auroc, roc_analysis};
use crate::rollout::{Rollout, Row, DOF};
use crate::scalar::Scalar;
use crate::scoring::{score_all, ScoreParams, Variant};

pub use acquisition::{expected_improvement, expected_improvement_from, propose_next, CANDIDATES, REFINEMENTS, XI};
pub use design::{latin_hypercube, shifted_halton};
pub use gp::{length_scale_grid, matern52, GpSurrogate, NOISE_JITTER};

/// Dimensionality of the search: window, contrast and seven DoF weights.
pub const DIMS: usize = 2 + DOF;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub w_range: [usize; 2],
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { w_range: [10, 100], alpha_range: [0.05, 0.95], beta_range: [1.0, 10.0] }
    }
}

fn unit(x: f64, lo: f64, hi: f64) -> f64 {
    (x - lo) / (hi - lo)
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let [wl, wh] = self.w_range;
        let [al, ah] = self.alpha_range;
        let [bl, bh] = self.beta_range;
        if wl == 0 || wl >= wh {
            return Err(Error::config(format!("bad w_range {:?}", self.w_range)));
        }
        if !(al > 0.0 && al < ah && ah < 1.0) {
            return Err(Error::config(format!("bad alpha_range {:?}", self.alpha_range)));
        }
        if !(bl >= 0.0 && bl < bh && bh.is_finite()) {
            return Err(Error::config(format!("bad beta_range {:?}", self.beta_range)));
        }
        Ok(())
    }

    /// Maps weighted SW+ATR parameters onto the unit cube.
    pub fn normalize(&self, params: &ScoreParams<f64>) -> Result<[f64; DIMS]> {
        let (w, alpha, beta) = match (params.variant, params.w, params.alpha, params.beta) {
            (Variant::WeightedSwAtr, Some(w), Some(a), Some(b)) => (w, a, b),
            _ => return Err(Error::config("normalize expects complete weighted SW+ATR parameters")),
        };
        let [wl, wh] = self.w_range;
        let [al, ah] = self.alpha_range;
        let [bl, bh] = self.beta_range;
        if !(wl..=wh).contains(&w) {
            return Err(Error::validation(format!("w = {w} outside [{wl}, {wh}]")));
        }
        if !(al..=ah).contains(&alpha) {
            return Err(Error::validation(format!("alpha = {alpha} outside [{al}, {ah}]")));
        }
        if let Some(d) = beta.iter().position(|b| !(bl..=bh).contains(b)) {
            return Err(Error::validation(format!("beta[{d}] = {} outside [{bl}, {bh}]", beta[d])));
        }
        let mut x = [0.0; DIMS];
        x[0] = unit(w as f64, wl as f64, wh as f64);
        x[1] = unit(alpha, al, ah);
        for d in 0..DOF {
            x[2 + d] = unit(beta[d], bl, bh);
        }
        Ok(x)
    }

    /// Inverse of [`normalize`](Self::normalize); coordinates are clamped to
    /// the cube and `w` is rounded to the nearest integer.
    pub fn denormalize(&self, x: &[f64]) -> ScoreParams<f64> {
        assert_eq!(x.len(), DIMS, "expected a {DIMS}-dimensional point");
        let lerp = |u: f64, lo: f64, hi: f64| lo + u.clamp(0.0, 1.0) * (hi - lo);
        let [wl, wh] = self.w_range;
        let w = (lerp(x[0], wl as f64, wh as f64).round() as usize).clamp(wl, wh);
        let alpha = lerp(x[1], self.alpha_range[0], self.alpha_range[1]);
        let beta: Row<f64> = std::array::from_fn(|d| lerp(x[2 + d], self.beta_range[0], self.beta_range[1]));
        ScoreParams::weighted(w, alpha, beta)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub iteration: usize,
    pub params: ScoreParams<f64>,
    /// Calibration-split AUROC, failures positive.
    pub objective: f64,
    /// Set when the objective could not be evaluated and was recorded as 0.
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub n_init: usize,
    pub n_iter: usize,
    pub seed: u64,
    pub space: SearchSpace,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { n_init: 10, n_iter: 50, seed: 0, space: SearchSpace::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    pub best: Trial,
    /// Youden threshold of the best trial's scores on the calibration split.
    pub gamma_star: f64,
    pub history: Vec<Trial>,
    pub seed: u64,
    /// Total objective evaluations, `n_init + n_iter`.
    pub budget: usize,
    pub n_init: usize,
}

fn to_scalar_params<T: Scalar>(p: &ScoreParams<f64>) -> ScoreParams<T> {
    ScoreParams {
        variant: p.variant,
        w: p.w,
        alpha: p.alpha.map(T::lit),
        beta: p.beta.map(|b| b.map(T::lit)),
    }
}

fn scores_for<T: Scalar>(rollouts: &[Rollout<T>], params: &ScoreParams<f64>) -> Result<Vec<T>> {
    score_all(rollouts, &to_scalar_params(params))
}

/// Calibration-split AUROC of one parameter setting.
pub fn objective<T: Scalar>(rollouts: &[Rollout<T>], params: &ScoreParams<f64>) -> Result<f64> {
    let labels: Vec<_> = rollouts.iter().map(|r| r.label()).collect();
    let scores = scores_for(rollouts, params)?;
    Ok(auroc(&scores, &labels)?.to_f64_lossy())
}

/// Initial design: the centre of the cube followed by `n - 1` Latin
/// hypercube points.
pub fn initial_design(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut design = vec![vec![0.5; DIMS]];
    if n > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        design.extend(latin_hypercube(n - 1, DIMS, &mut rng));
    }
    design
}

/// Seed for the acquisition step of iteration `i`.
fn iteration_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64 + 1)
}

/// Generic maximization loop on `[0, 1]^dims`. Evaluates `initial`, then
/// `n_iter` surrogate-guided proposals. Returns every (point, value) pair in
/// evaluation order.
pub fn maximize<F>(dims: usize, initial: Vec<Vec<f64>>, n_iter: usize, seed: u64, mut f: F) -> Vec<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(initial.len() + n_iter);
    let mut values: Vec<f64> = Vec::with_capacity(initial.len() + n_iter);
    for x in initial {
        values.push(f(&x));
        inputs.push(x);
    }
    for i in 0..n_iter {
        let iter_seed = iteration_seed(seed, i);
        let x = match GpSurrogate::fit(&inputs, &values) {
            Ok(gp) => propose_next(&gp, dims, iter_seed),
            // fewer than two observations: sample the cube instead
            Err(_) => latin_hypercube(1, dims, &mut ChaCha8Rng::seed_from_u64(iter_seed)).remove(0),
        };
        values.push(f(&x));
        inputs.push(x);
    }
    inputs.into_iter().zip(values).collect()
}

/// Runs the full calibration on one split.
pub fn calibrate<T: Scalar>(rollouts: &[Rollout<T>], config: &CalibrationConfig) -> Result<CalibrationResult> {
    config.space.validate()?;
    if config.n_init == 0 {
        return Err(Error::config("`n_init` must be at least 1"));
    }
    let failures = rollouts.iter().filter(|r| r.label().is_failure()).count();
    if failures == 0 || failures == rollouts.len() {
        return Err(Error::config(format!(
            "calibration split needs both outcomes; got {failures} failures among {} rollouts",
            rollouts.len()
        )));
    }

    let space = &config.space;
    let mut history: Vec<Trial> = Vec::with_capacity(config.n_init + config.n_iter);
    let evaluations = maximize(DIMS, initial_design(config.n_init, config.seed), config.n_iter, config.seed, |x| {
        let params = space.denormalize(x);
        let (objective, diagnostic) = match objective(rollouts, &params) {
            Ok(v) if v.is_finite() => (v, None),
            Ok(v) => (0.0, Some(format!("objective evaluated to {v}"))),
            Err(e) => (0.0, Some(e.to_string())),
        };
        history.push(Trial { iteration: history.len(), params, objective, diagnostic });
        objective
    });
    debug_assert_eq!(evaluations.len(), history.len());

    let best = history
        .iter()
        .fold(None::<&Trial>, |acc, t| match acc {
            Some(b) if b.objective >= t.objective => Some(b),
            _ => Some(t),
        })
        .expect("non-empty history")
        .clone();

    let labels: Vec<_> = rollouts.iter().map(|r| r.label()).collect();
    let gamma_star = roc_analysis(&scores_for(rollouts, &best.params)?, &labels)?
        .youden_threshold
        .to_f64_lossy();

    Ok(CalibrationResult {
        best,
        gamma_star,
        history,
        seed: config.seed,
        budget: config.n_init + config.n_iter,
        n_init: config.n_init,
    })
}

#[derive(Serialize, Deserialize)]
struct TrialRecord {
    iteration: usize,
    w: usize,
    alpha: f64,
    beta: Row<f64>,
    auroc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    diagnostic: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct BestRecord {
    w: usize,
    alpha: f64,
    beta: Row<f64>,
    auroc: f64,
    gamma_star: f64,
    #[serde(default)]
    iteration: usize,
}

#[derive(Serialize, Deserialize)]
struct CalibrationFile {
    best: BestRecord,
    #[serde(default)]
    history: Vec<TrialRecord>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    budget: usize,
    #[serde(default)]
    n_init: usize,
}

fn trial_record(t: &Trial) -> TrialRecord {
    TrialRecord {
        iteration: t.iteration,
        w: t.params.w.expect("weighted params"),
        alpha: t.params.alpha.expect("weighted params"),
        beta: t.params.beta.expect("weighted params"),
        auroc: t.objective,
        diagnostic: t.diagnostic.clone(),
    }
}

impl CalibrationResult {
    /// Learned deployment parameters.
    pub fn params(&self) -> ScoreParams<f64> {
        self.best.params
    }

    pub fn to_json(&self) -> Result<String> {
        let best = trial_record(&self.best);
        let file = CalibrationFile {
            best: BestRecord {
                w: best.w,
                alpha: best.alpha,
                beta: best.beta,
                auroc: best.auroc,
                gamma_star: self.gamma_star,
                iteration: best.iteration,
            },
            history: self.history.iter().map(trial_record).collect(),
            seed: self.seed,
            budget: self.budget,
            n_init: self.n_init,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a calibration document. Only `best` is required, so hand-written
    /// parameter files work too.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CalibrationFile = serde_json::from_str(text)?;
        let b = &file.best;
        let params = ScoreParams::weighted(b.w, b.alpha, b.beta);
        params.validate()?;
        if !b.gamma_star.is_finite() {
            return Err(Error::config("calibration `gamma_star` must be finite"));
        }
        let history = file
            .history
            .into_iter()
            .map(|t| Trial {
                iteration: t.iteration,
                params: ScoreParams::weighted(t.w, t.alpha, t.beta),
                objective: t.auroc,
                diagnostic: t.diagnostic,
            })
            .collect();
        Ok(Self {
            best: Trial { iteration: b.iteration, params, objective: b.auroc, diagnostic: None },
            gamma_star: b.gamma_star,
            history,
            seed: file.seed,
            budget: file.budget,
            n_init: file.n_init,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_map_to_cube_corners() {
        let s = SearchSpace::default();
        assert_eq!(s.normalize(&ScoreParams::weighted(10, 0.05, [1.0; DOF])).unwrap(), [0.0; DIMS]);
        let top = s.normalize(&ScoreParams::weighted(100, 0.95, [10.0; DOF])).unwrap();
        for v in top {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normalize_round_trips_on_integer_windows() {
        let s = SearchSpace::default();
        for w in [10, 11, 37, 55, 99, 100] {
            let p = ScoreParams::weighted(w, 0.35, [1.0, 2.5, 3.0, 9.75, 10.0, 4.2, 7.0]);
            let back = s.denormalize(&s.normalize(&p).unwrap());
            assert_eq!(back.w, p.w);
            assert!((back.alpha.unwrap() - 0.35).abs() < 1e-12);
            for (a, b) in back.beta.unwrap().iter().zip(p.beta.unwrap()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn out_of_space_rejected() {
        let s = SearchSpace::default();
        assert!(s.normalize(&ScoreParams::weighted(9, 0.5, [1.0; DOF])).is_err());
        assert!(s.normalize(&ScoreParams::weighted(50, 0.99, [1.0; DOF])).is_err());
        assert!(s.normalize(&ScoreParams::weighted(50, 0.5, [0.5; DOF])).is_err());
        assert!(s.normalize(&ScoreParams::sw_atr(50, 0.5)).is_err());
    }

    #[test]
    fn denormalize_clamps_and_rounds() {
        let s = SearchSpace::default();
        let mut x = [0.5; DIMS];
        x[0] = 1.7;
        x[1] = -3.0;
        let p = s.denormalize(&x);
        assert_eq!(p.w, Some(100));
        assert_eq!(p.alpha, Some(0.05));
        assert_eq!(s.denormalize(&[0.5; DIMS]).w, Some(55));
    }

    #[test]
    fn design_starts_at_centre() {
        let d = initial_design(10, 4);
        assert_eq!(d.len(), 10);
        assert_eq!(d[0], vec![0.5; DIMS]);
        assert_eq!(initial_design(1, 4).len(), 1);
    }

    #[test]
    fn one_dimensional_quadratic_is_located() {
        let evals = maximize(1, vec![vec![0.05], vec![0.5], vec![0.95]], 15, 11, |x| -(x[0] - 0.7).powi(2));
        let best = evals.iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert!((best.0[0] - 0.7).abs() < 0.05, "best x = {}", best.0[0]);
    }

    #[test]
    fn json_round_trip() {
        let t = Trial { iteration: 3, params: ScoreParams::weighted(42, 0.8, [1.5; DOF]), objective: 0.91, diagnostic: None };
        let r = CalibrationResult { best: t.clone(), gamma_star: 1.25, history: vec![t], seed: 9, budget: 1, n_init: 1 };
        let back = CalibrationResult::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let minimal = r#"{"best":{"w":40,"alpha":0.9,"beta":[1,1,1,1,1,1,1],"auroc":0.5,"gamma_star":0.3}}"#;
        assert_eq!(CalibrationResult::from_json(minimal).unwrap().params().w, Some(40));
        let bad = r#"{"best":{"w":0,"alpha":0.9,"beta":[1,1,1,1,1,1,1],"auroc":0.5,"gamma_star":0.3}}"#;
        assert!(CalibrationResult::from_json(bad).is_err());
    }
}
