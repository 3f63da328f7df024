//! Rollout traces and per-step, per-DoF token entropy.
//!
//! A rollout holds, for every control step, the seven action components the
//! policy emitted (three translation deltas, three rotation deltas and the
//! gripper command) together with the Shannon entropy, in nats, of the
//! 256-bin categorical distribution each component was decoded from.

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of action channels per step.
pub const DOF: usize = 7;
/// Number of discretization bins per action channel.
pub const BINS: usize = 256;

/// Index of the gripper channel.
pub const GRIPPER: usize = DOF - 1;

/// One row of a per-step matrix: a value per action channel.
pub type Row<T> = [T; DOF];

/// Upper bound of the entropy of a distribution over [`BINS`] outcomes, `ln 256`.
pub fn max_entropy<T: Scalar>() -> T {
    T::from_count(BINS).ln()
}

fn negligible<T: Scalar>(p: T) -> bool {
    p <= T::lit(1e-300)
}

/// A validated probability vector over the [`BINS`] action bins.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenDistribution<T> {
    probs: Vec<T>,
}

impl<T: Scalar> TokenDistribution<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        if probs.len() != BINS {
            return Err(Error::validation(format!(
                "token distribution has {} bins, expected {BINS}",
                probs.len()
            )));
        }
        let mut total = T::zero();
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < T::zero() {
                return Err(Error::validation(format!("token distribution: bin {i} has invalid mass {p}")));
            }
            total += p;
        }
        if (total - T::one()).abs() > T::mass_tolerance() {
            let last = probs.len() - 1;
            return Err(Error::validation(format!(
                "token distribution: mass sums to {total} (checked through bin {last}), expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn token_entropy<T: Scalar>(p: &TokenDistribution<T>) -> T {
    entropy_of(p.probs())
}

fn entropy_of<T: Scalar>(probs: &[T]) -> T {
    let mut h = T::zero();
    for &p in probs {
        if !negligible(p) {
            h -= p * p.ln();
        }
    }
    h.max(T::zero())
}

/// Raw pre-softmax scores, `steps × DOF × BINS`, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits<T> {
    steps: usize,
    data: Vec<T>,
}

impl<T: Scalar> Logits<T> {
    pub fn new(steps: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != steps * DOF * BINS {
            return Err(Error::validation(format!(
                "logit tensor has {} values, expected {steps}x{DOF}x{BINS}",
                data.len()
            )));
        }
        Ok(Self { steps, data })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn slice(&self, t: usize, d: usize) -> &[T] {
        let start = (t * DOF + d) * BINS;
        &self.data[start..start + BINS]
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }
}

/// Entropy of `softmax(logits)` for a single slice; the maximum is
/// subtracted before exponentiation.
pub fn softmax_entropy<T: Scalar>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    let mut probs: Vec<T> = logits
        .iter()
        .map(|&x| {
            let e = (x - max).exp();
            z += e;
            e
        })
        .collect();
    for p in &mut probs {
        *p /= z;
    }
    entropy_of(&probs)
}

/// Per-step, per-DoF entropy of a full logit tensor.
pub fn entropy_matrix<T: Scalar>(logits: &Logits<T>) -> Result<Vec<Row<T>>> {
    let mut out = Vec::with_capacity(logits.steps());
    for t in 0..logits.steps() {
        let mut row = [T::zero(); DOF];
        for (d, cell) in row.iter_mut().enumerate() {
            let slice = logits.slice(t, d);
            if let Some(v) = slice.iter().position(|x| !x.is_finite()) {
                return Err(Error::validation(format!("non-finite logit at (t={t}, d={d}), bin {v}")));
            }
            *cell = softmax_entropy(slice);
        }
        out.push(row);
    }
    Ok(out)
}

/// Episode outcome. Failures are the positive class throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Failure = 0,
    Success = 1,
}

impl Outcome {
    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            0 => Some(Outcome::Failure),
            1 => Some(Outcome::Success),
            _ => None,
        }
    }

    pub fn label(self) -> u8 {
        self as u8
    }

    pub fn is_failure(self) -> bool {
        self == Outcome::Failure
    }
}

/// One policy episode. Immutable once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout<T = f64> {
    id: String,
    suite: String,
    task: String,
    label: Outcome,
    actions: Vec<Row<T>>,
    entropy: Vec<Row<T>>,
    logits: Option<Logits<T>>,
    metadata: Map<String, Value>,
}

impl<T: Scalar> Rollout<T> {
    pub fn new(
        id: impl Into<String>,
        suite: impl Into<String>,
        task: impl Into<String>,
        label: Outcome,
        actions: Vec<Row<T>>,
        entropy: Vec<Row<T>>,
    ) -> Result<Self> {
        let id = id.into();
        if entropy.is_empty() {
            return Err(Error::validation(format!("rollout `{id}` has no steps")));
        }
        if actions.len() != entropy.len() {
            return Err(Error::validation(format!(
                "rollout `{id}`: {} action rows but {} entropy rows",
                actions.len(),
                entropy.len()
            )));
        }
        let upper = max_entropy::<T>() + T::mass_tolerance();
        for (t, row) in entropy.iter().enumerate() {
            for (d, &h) in row.iter().enumerate() {
                if !(h >= T::zero() && h <= upper) {
                    return Err(Error::validation(format!(
                        "rollout `{id}`: entropy {h} at (t={t}, d={d}) outside [0, ln {BINS}]"
                    )));
                }
            }
        }
        for (t, row) in actions.iter().enumerate() {
            if let Some(d) = row.iter().position(|a| !a.is_finite()) {
                return Err(Error::validation(format!("rollout `{id}`: non-finite action at (t={t}, d={d})")));
            }
        }
        Ok(Self {
            id,
            suite: suite.into(),
            task: task.into(),
            label,
            actions,
            entropy,
            logits: None,
            metadata: Map::new(),
        })
    }

    /// Builds a rollout whose entropy is computed from logits.
    pub fn from_logits(
        id: impl Into<String>,
        suite: impl Into<String>,
        task: impl Into<String>,
        label: Outcome,
        actions: Vec<Row<T>>,
        logits: Logits<T>,
    ) -> Result<Self> {
        let entropy = entropy_matrix(&logits)?;
        let mut r = Self::new(id, suite, task, label, actions, entropy)?;
        r.logits = Some(logits);
        Ok(r)
    }

    /// Attaches logits, checking them against the stored entropy to 1e-9 per entry.
    pub fn with_logits(mut self, logits: Logits<T>) -> Result<Self> {
        if logits.steps() != self.len() {
            return Err(Error::validation(format!(
                "rollout `{}`: logits cover {} steps, rollout has {}",
                self.id,
                logits.steps(),
                self.len()
            )));
        }
        let recomputed = entropy_matrix(&logits)?;
        let tol = T::lit(1e-9).max(T::mass_tolerance());
        for (t, (a, b)) in recomputed.iter().zip(&self.entropy).enumerate() {
            for d in 0..DOF {
                if (a[d] - b[d]).abs() > tol {
                    return Err(Error::validation(format!(
                        "rollout `{}`: stored entropy {} disagrees with logits ({}) at (t={t}, d={d})",
                        self.id, b[d], a[d]
                    )));
                }
            }
        }
        self.logits = Some(logits);
        Ok(self)
    }

    pub fn with_metadata(mut self, metadata: Map<String, Value>) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn suite(&self) -> &str {
        &self.suite
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    pub fn label(&self) -> Outcome {
        self.label
    }

    pub fn actions(&self) -> &[Row<T>] {
        &self.actions
    }

    pub fn entropy(&self) -> &[Row<T>] {
        &self.entropy
    }

    pub fn logits(&self) -> Option<&Logits<T>> {
        self.logits.as_ref()
    }

    /// Fields not covered by the schema, carried through load/save untouched.
    pub fn metadata(&self) -> &Map<String, Value> {
        &self.metadata
    }

    /// Number of steps `T`.
    pub fn len(&self) -> usize {
        self.entropy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entropy.is_empty()
    }
}
