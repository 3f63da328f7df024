//! Online scoring of a rollout as it executes.
//!
//! Each push costs O(1): the step score needs only the previous action row
//! for the sign test, and the window sum is a rolling compensated sum that
//! performs the same additions and subtractions, in the same order, as
//! [`window_max_score`](crate::scoring::window_max_score). A finished stream
//! therefore reports exactly the batch score.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::rollout::{max_entropy, Row, DOF};
use crate::scalar::{CompensatedSum, Scalar};
use crate::scoring::{flip_row, row_score, weight_row, ScoreParams, Variant};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PushOutcome<T> {
    /// Zero-based index of the step just ingested.
    pub step: usize,
    /// Max completed-window mean so far; `None` until `w` steps have arrived.
    pub current_score: Option<T>,
    pub triggered: bool,
}

#[derive(Clone, Debug)]
pub struct Monitor<T = f64> {
    params: ScoreParams<T>,
    gamma: T,
    window: usize,
    alpha: T,
    recent: VecDeque<T>,
    window_sum: CompensatedSum<T>,
    prev_action: Option<Row<T>>,
    best_sum: Option<T>,
    steps: usize,
    trigger_step: Option<usize>,
}

impl<T: Scalar> Monitor<T> {
    /// `params` must be an SW+ATR or weighted SW+ATR configuration.
    pub fn new(params: ScoreParams<T>, gamma: T) -> Result<Self> {
        if !matches!(params.variant, Variant::SwAtr | Variant::WeightedSwAtr) {
            return Err(Error::config(format!(
                "monitor supports `sw-atr` and `weighted` variants, not `{}`",
                params.variant
            )));
        }
        params.validate()?;
        if gamma.is_nan() {
            return Err(Error::config("trigger threshold is NaN"));
        }
        let window = params.w.expect("validated");
        Ok(Self {
            alpha: params.alpha.expect("validated"),
            params,
            gamma,
            window,
            recent: VecDeque::with_capacity(window + 1),
            window_sum: CompensatedSum::new(),
            prev_action: None,
            best_sum: None,
            steps: 0,
            trigger_step: None,
        })
    }

    pub fn params(&self) -> &ScoreParams<T> {
        &self.params
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn trigger_step(&self) -> Option<usize> {
        self.trigger_step
    }

    pub fn triggered(&self) -> bool {
        self.trigger_step.is_some()
    }

    pub fn current_score(&self) -> Option<T> {
        self.best_sum.map(|s| s / T::from_count(self.window))
    }

    pub fn push(&mut self, entropy: &Row<T>, action: &Row<T>) -> Result<PushOutcome<T>> {
        let t = self.steps;
        let upper = max_entropy::<T>() + T::mass_tolerance();
        for d in 0..DOF {
            if !(entropy[d] >= T::zero() && entropy[d] <= upper) {
                return Err(Error::validation(format!(
                    "entropy {} at (t={t}, d={d}) outside [0, ln 256]",
                    entropy[d]
                )));
            }
            if !action[d].is_finite() {
                return Err(Error::validation(format!("non-finite action at (t={t}, d={d})")));
            }
        }

        let flips = match &self.prev_action {
            Some(prev) => flip_row(prev, action),
            None => [false; DOF],
        };
        let weights = weight_row(&flips, self.alpha);
        let step_score = row_score(entropy, Some(&weights), self.params.beta.as_ref());
        self.prev_action = Some(*action);

        self.window_sum.add(step_score);
        self.recent.push_back(step_score);
        if self.recent.len() > self.window {
            let old = self.recent.pop_front().expect("non-empty");
            self.window_sum.sub(old);
        }
        self.steps += 1;

        if self.steps >= self.window {
            let sum = self.window_sum.value();
            self.best_sum = Some(match self.best_sum {
                Some(b) => b.max(sum),
                None => sum,
            });
        }
        let current_score = self.current_score();
        if self.trigger_step.is_none() {
            if let Some(s) = current_score {
                if s >= self.gamma {
                    self.trigger_step = Some(t);
                }
            }
        }
        Ok(PushOutcome { step: t, current_score, triggered: self.triggered() })
    }

    /// Final score of the stream. Streams shorter than `w` are scored as a
    /// single window over everything seen, matching the batch clamp rule,
    /// and may trigger on the last step here.
    pub fn finalize(&mut self) -> Option<T> {
        if self.steps == 0 {
            return None;
        }
        if self.steps >= self.window {
            return self.current_score();
        }
        let score = self.window_sum.value() / T::from_count(self.steps);
        if self.trigger_step.is_none() && score >= self.gamma {
            self.trigger_step = Some(self.steps - 1);
        }
        Some(score)
    }

    pub fn reset(&mut self) {
        self.recent.clear();
        self.window_sum = CompensatedSum::new();
        self.prev_action = None;
        self.best_sum = None;
        self.steps = 0;
        self.trigger_step = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::{Outcome, Rollout};
    use crate::scoring::sw_atr_score;

    fn fixture() -> Rollout<f64> {
        let n = 40;
        let entropy: Vec<Row<f64>> = (0..n)
            .map(|t| std::array::from_fn(|d| 0.2 + 0.05 * ((t * 3 + d) % 7) as f64 + if (20..28).contains(&t) { 1.5 } else { 0.0 }))
            .collect();
        let actions: Vec<Row<f64>> = (0..n)
            .map(|t| std::array::from_fn(|d| if (t + d) % 5 == 0 { -0.3 } else { 0.4 }))
            .collect();
        Rollout::new("m", "s", "t", Outcome::Failure, actions, entropy).unwrap()
    }

    #[test]
    fn zero_stream_never_triggers() {
        let mut m = Monitor::new(ScoreParams::sw_atr(5, 0.9), 1e-6).unwrap();
        for _ in 0..50 {
            let out = m.push(&[0.0; DOF], &[0.1; DOF]).unwrap();
            assert!(!out.triggered);
        }
        assert_eq!(m.finalize(), Some(0.0));
    }

    #[test]
    fn final_score_matches_batch() {
        let r = fixture();
        let mut m = Monitor::new(ScoreParams::sw_atr(6, 0.8), f64::INFINITY).unwrap();
        for (h, a) in r.entropy().iter().zip(r.actions()) {
            m.push(h, a).unwrap();
        }
        assert_eq!(m.finalize().unwrap(), sw_atr_score(&r, 6, 0.8).unwrap());
    }

    #[test]
    fn score_absent_before_first_full_window() {
        let r = fixture();
        let mut m = Monitor::new(ScoreParams::sw_atr(4, 0.7), 10.0).unwrap();
        for (t, (h, a)) in r.entropy().iter().zip(r.actions()).enumerate() {
            let out = m.push(h, a).unwrap();
            assert_eq!(out.current_score.is_some(), t >= 3);
        }
    }

    #[test]
    fn short_stream_uses_clamped_window() {
        let r = fixture();
        let mut m = Monitor::new(ScoreParams::sw_atr(100, 0.7), 0.0).unwrap();
        for (h, a) in r.entropy().iter().zip(r.actions()) {
            assert!(!m.push(h, a).unwrap().triggered);
        }
        assert_eq!(m.finalize().unwrap(), sw_atr_score(&r, 100, 0.7).unwrap());
        assert_eq!(m.trigger_step(), Some(r.len() - 1));
    }

    #[test]
    fn reset_replays_identically() {
        let r = fixture();
        let mut fresh = Monitor::new(ScoreParams::sw_atr(5, 0.9), 0.5).unwrap();
        let mut reused = fresh.clone();
        for (h, a) in r.entropy().iter().zip(r.actions()).take(17) {
            reused.push(h, a).unwrap();
        }
        reused.reset();
        assert!(!reused.triggered());
        assert_eq!(reused.gamma(), 0.5);
        assert_eq!(reused.params(), &ScoreParams::sw_atr(5, 0.9));
        for (h, a) in r.entropy().iter().zip(r.actions()) {
            assert_eq!(fresh.push(h, a).unwrap(), reused.push(h, a).unwrap());
        }
    }

    #[test]
    fn triggered_is_sticky() {
        let r = fixture();
        let mut m = Monitor::new(ScoreParams::sw_atr(3, 0.9), 0.3).unwrap();
        let mut seen = false;
        for (h, a) in r.entropy().iter().zip(r.actions()) {
            let out = m.push(h, a).unwrap();
            assert!(!seen || out.triggered);
            seen |= out.triggered;
        }
        assert!(seen);
    }

    #[test]
    fn rejects_unsupported_configurations() {
        assert!(Monitor::new(ScoreParams::<f64>::sw(5), 1.0).is_err());
        assert!(Monitor::new(ScoreParams::<f64>::mean(), 1.0).is_err());
        let mut m = Monitor::new(ScoreParams::sw_atr(5, 0.9), 1.0).unwrap();
        assert!(m.push(&[9.0; DOF], &[0.0; DOF]).is_err());
        assert!(m.push(&[0.1; DOF], &[f64::NAN; DOF]).is_err());
    }
}
