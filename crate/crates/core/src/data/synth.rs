//! Seeded synthetic rollouts that exhibit the averaging trap.
//!
//! Successes run at a higher base entropy and carry short benign spikes
//! under smooth motion. Failures run at a lower base entropy and carry one
//! long spike late in the episode during which actions oscillate. The
//! defaults put benign peaks slightly above failure peaks and balance the
//! class means, so rollout means overlap, very short windows mislead, and
//! windows near the failure-spike length separate the classes.
//!
//! Randomness: rollout `i` draws from its own ChaCha8 stream seeded with
//! `splitmix64(seed ^ splitmix64(i))`, so generation order and thread count
//! do not affect the output.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rollout::{max_entropy, Outcome, Rollout, Row, DOF, GRIPPER};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenignSpike {
    /// Expected spike onsets per 100 steps.
    pub rate: f64,
    pub length_range: [usize; 2],
    pub height: f64,
}

impl Default for BenignSpike {
    fn default() -> Self {
        Self { rate: 0.6, length_range: [5, 15], height: 3.65 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureSpike {
    pub length_range: [usize; 2],
    pub height: f64,
    /// Onset is uniform over this trailing fraction of the horizon.
    pub onset_fraction: f64,
}

impl Default for FailureSpike {
    fn default() -> Self {
        Self { length_range: [20, 60], height: 4.2, onset_fraction: 0.6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Oscillation {
    /// Per-step sign-flip probability inside a failure spike.
    pub spike_flip_probability: f64,
    /// Per-step sign-flip probability of the arm channels elsewhere.
    pub baseline_flip_probability: f64,
    /// Per-step toggle probability of the gripper outside a failure spike.
    pub gripper_flip_probability: f64,
}

impl Default for Oscillation {
    fn default() -> Self {
        Self { spike_flip_probability: 0.6, baseline_flip_probability: 0.05, gripper_flip_probability: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub suite: String,
    pub n_tasks: usize,
    pub n_success: usize,
    pub n_failure: usize,
    pub horizon_range: [usize; 2],
    pub base_entropy_success: f64,
    pub base_entropy_failure: f64,
    pub benign_spike: BenignSpike,
    pub failure_spike: FailureSpike,
    pub oscillation: Oscillation,
    pub entropy_noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            suite: "synthetic".into(),
            n_tasks: 10,
            n_success: 200,
            n_failure: 200,
            horizon_range: [200, 400],
            base_entropy_success: 0.9,
            base_entropy_failure: 0.72,
            benign_spike: BenignSpike::default(),
            failure_spike: FailureSpike::default(),
            oscillation: Oscillation::default(),
            entropy_noise_scale: 0.15,
            seed: 42,
        }
    }
}

fn check_range(name: &str, r: [usize; 2], min: usize) -> Result<()> {
    if r[0] < min || r[0] > r[1] {
        return Err(Error::validation(format!("`{name}` = {r:?} must satisfy {min} <= lo <= hi")));
    }
    Ok(())
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::validation(format!("`{name}` = {p} must lie in [0, 1]")));
    }
    Ok(())
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::validation(format!("`{name}` = {x} must be positive")));
    }
    Ok(())
}

impl SyntheticConfig {
    /// Parses and validates a JSON config. Omitted fields take their
    /// defaults; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(format!("`{path}`: {}", e.into_inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_success == 0 {
            return Err(Error::validation("`n_success` must be at least 1"));
        }
        if self.n_failure == 0 {
            return Err(Error::validation("`n_failure` must be at least 1"));
        }
        if self.n_tasks == 0 {
            return Err(Error::validation("`n_tasks` must be at least 1"));
        }
        check_range("horizon_range", self.horizon_range, 1)?;
        check_range("benign_spike.length_range", self.benign_spike.length_range, 1)?;
        check_range("failure_spike.length_range", self.failure_spike.length_range, 1)?;
        for (name, base) in [
            ("base_entropy_success", self.base_entropy_success),
            ("base_entropy_failure", self.base_entropy_failure),
        ] {
            if !(base.is_finite() && base >= 0.0 && base <= max_entropy::<f64>()) {
                return Err(Error::validation(format!("`{name}` = {base} must lie in [0, ln 256]")));
            }
        }
        check_positive("benign_spike.height", self.benign_spike.height)?;
        check_positive("failure_spike.height", self.failure_spike.height)?;
        // rate is per 100 steps, so rate/100 is the per-step onset probability
        check_probability("benign_spike.rate / 100", self.benign_spike.rate / 100.0)?;
        check_probability("failure_spike.onset_fraction", self.failure_spike.onset_fraction)?;
        check_probability("oscillation.spike_flip_probability", self.oscillation.spike_flip_probability)?;
        check_probability("oscillation.baseline_flip_probability", self.oscillation.baseline_flip_probability)?;
        check_probability("oscillation.gripper_flip_probability", self.oscillation.gripper_flip_probability)?;
        if !(self.entropy_noise_scale.is_finite() && self.entropy_noise_scale >= 0.0) {
            return Err(Error::validation("`entropy_noise_scale` must be non-negative"));
        }
        Ok(())
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn rollout_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index as u64)))
}

/// Generates `n_success` successes followed by `n_failure` failures.
pub fn generate(config: &SyntheticConfig) -> Result<Dataset<f64>> {
    config.validate()?;
    let total = config.n_success + config.n_failure;
    let rollouts = (0..total)
        .into_par_iter()
        .map(|i| {
            let label = if i < config.n_success { Outcome::Success } else { Outcome::Failure };
            one_rollout(config, i, label)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(rollouts)
}

fn one_rollout(cfg: &SyntheticConfig, index: usize, label: Outcome) -> Result<Rollout<f64>> {
    let mut rng = rollout_rng(cfg.seed, index);
    let horizon = rng.gen_range(cfg.horizon_range[0]..=cfg.horizon_range[1]);

    // per-step entropy multiplier and whether the step is inside a failure spike
    let mut height = vec![1.0; horizon];
    let mut unstable = vec![false; horizon];
    let base = match label {
        Outcome::Success => {
            let spike = &cfg.benign_spike;
            let onset_p = spike.rate / 100.0;
            for t in 0..horizon {
                if rng.gen::<f64>() < onset_p {
                    let len = rng.gen_range(spike.length_range[0]..=spike.length_range[1]);
                    for h in &mut height[t..(t + len).min(horizon)] {
                        *h = spike.height;
                    }
                }
            }
            cfg.base_entropy_success
        }
        Outcome::Failure => {
            let spike = &cfg.failure_spike;
            let len = rng.gen_range(spike.length_range[0]..=spike.length_range[1]).min(horizon);
            let latest = horizon - len;
            let earliest = (((1.0 - spike.onset_fraction) * horizon as f64).floor() as usize).min(latest);
            let onset = rng.gen_range(earliest..=latest);
            for t in onset..onset + len {
                height[t] = spike.height;
                unstable[t] = true;
            }
            cfg.base_entropy_failure
        }
    };

    let sigma = cfg.entropy_noise_scale;
    let cap = max_entropy::<f64>();
    let entropy: Vec<Row<f64>> = (0..horizon)
        .map(|t| {
            std::array::from_fn(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                // mean-preserving log-normal noise
                let noise = (sigma * z - 0.5 * sigma * sigma).exp();
                (base * height[t] * noise).clamp(0.0, cap)
            })
        })
        .collect();

    let osc = &cfg.oscillation;
    let mut sign: [f64; DOF] = std::array::from_fn(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 });
    let mut magnitude: [f64; DOF] = std::array::from_fn(|_| rng.gen_range(0.05..0.5));
    let mut actions = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut row = [0.0; DOF];
        for d in 0..DOF {
            let p = if unstable[t] {
                osc.spike_flip_probability
            } else if d == GRIPPER {
                osc.gripper_flip_probability
            } else {
                osc.baseline_flip_probability
            };
            if t > 0 && rng.gen::<f64>() < p {
                sign[d] = -sign[d];
            }
            if d == GRIPPER {
                row[d] = sign[d];
            } else {
                let step: f64 = StandardNormal.sample(&mut rng);
                magnitude[d] = (magnitude[d] + 0.02 * step).clamp(0.01, 1.0);
                row[d] = sign[d] * magnitude[d];
            }
        }
        actions.push(row);
    }

    let prefix = match label {
        Outcome::Success => "s",
        Outcome::Failure => "f",
    };
    let task = format!("task-{}", index % cfg.n_tasks);
    Rollout::new(format!("{}-{prefix}{index:05}", cfg.suite), cfg.suite.clone(), task, label, actions, entropy)
}
