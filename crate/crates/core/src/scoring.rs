//! Rollout scoring: the global mean baseline, sliding-window max pooling (SW),
//! action-transfer reweighting (ATR), their combination, and the DoF-weighted
//! combination whose parameters come out of calibration.
//!
//! Step scores are reduced over DoF with a plain left-to-right sum so that
//! the batch scorers here and the streaming [`Monitor`](crate::monitor::Monitor)
//! produce identical step values. Reductions over time use a compensated sum.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rollout::{Rollout, Row, DOF};
use crate::scalar::{compensated_sum, CompensatedSum, Scalar};

/// The scoring variants, in order of increasing machinery.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Mean entropy over all steps and DoF.
    MeanBaseline,
    /// Max over stride-1 window means of the DoF-averaged step entropy.
    Sw,
    /// Mean of stability-reweighted entropy.
    Atr,
    /// Window max over reweighted step entropy.
    SwAtr,
    /// Window max over reweighted, DoF-weighted step entropy.
    WeightedSwAtr,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::MeanBaseline,
        Variant::Sw,
        Variant::Atr,
        Variant::SwAtr,
        Variant::WeightedSwAtr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MeanBaseline => "mean",
            Variant::Sw => "sw",
            Variant::Atr => "atr",
            Variant::SwAtr => "sw-atr",
            Variant::WeightedSwAtr => "weighted",
        }
    }

    pub fn needs_window(self) -> bool {
        matches!(self, Variant::Sw | Variant::SwAtr | Variant::WeightedSwAtr)
    }

    pub fn needs_alpha(self) -> bool {
        matches!(self, Variant::Atr | Variant::SwAtr | Variant::WeightedSwAtr)
    }

    pub fn needs_beta(self) -> bool {
        self == Variant::WeightedSwAtr
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mean" | "mean-baseline" | "baseline" => Ok(Variant::MeanBaseline),
            "sw" => Ok(Variant::Sw),
            "atr" => Ok(Variant::Atr),
            "sw-atr" | "swatr" | "sw+atr" => Ok(Variant::SwAtr),
            "weighted" | "weighted-sw-atr" | "sw-atr-bo" | "sw+atr+bo" => Ok(Variant::WeightedSwAtr),
            other => Err(Error::config(format!("unknown score variant `{other}`"))),
        }
    }
}

/// A variant together with the hyperparameters it needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreParams<T = f64> {
    pub variant: Variant,
    /// Window length in steps.
    pub w: Option<usize>,
    /// Stability contrast: weight of steps whose action sign flipped.
    pub alpha: Option<T>,
    /// Per-DoF weights.
    pub beta: Option<Row<T>>,
}

impl<T: Scalar> ScoreParams<T> {
    pub fn mean() -> Self {
        Self { variant: Variant::MeanBaseline, w: None, alpha: None, beta: None }
    }

    pub fn sw(w: usize) -> Self {
        Self { variant: Variant::Sw, w: Some(w), alpha: None, beta: None }
    }

    pub fn atr(alpha: T) -> Self {
        Self { variant: Variant::Atr, w: None, alpha: Some(alpha), beta: None }
    }

    pub fn sw_atr(w: usize, alpha: T) -> Self {
        Self { variant: Variant::SwAtr, w: Some(w), alpha: Some(alpha), beta: None }
    }

    pub fn weighted(w: usize, alpha: T, beta: Row<T>) -> Self {
        Self { variant: Variant::WeightedSwAtr, w: Some(w), alpha: Some(alpha), beta: Some(beta) }
    }

    /// Checks that every hyperparameter the variant uses is present and in range.
    pub fn validate(&self) -> Result<()> {
        let v = self.variant;
        if v.needs_window() {
            let w = self.w.ok_or_else(|| Error::config(format!("variant `{v}` requires field `w`")))?;
            check_window(w)?;
        }
        if v.needs_alpha() {
            let a = self.alpha.ok_or_else(|| Error::config(format!("variant `{v}` requires field `alpha`")))?;
            check_alpha(a)?;
        }
        if v.needs_beta() {
            let b = self.beta.ok_or_else(|| Error::config(format!("variant `{v}` requires field `beta`")))?;
            check_beta(&b)?;
        }
        Ok(())
    }
}

fn check_window(w: usize) -> Result<()> {
    if w == 0 {
        return Err(Error::validation("window length `w` must be at least 1"));
    }
    Ok(())
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::validation(format!("`alpha` = {alpha} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_beta<T: Scalar>(beta: &Row<T>) -> Result<()> {
    if let Some(d) = beta.iter().position(|b| !(b.is_finite() && *b >= T::zero())) {
        return Err(Error::validation(format!("`beta[{d}]` = {} must be finite and non-negative", beta[d])));
    }
    if beta.iter().all(|b| b.is_zero()) {
        return Err(Error::validation("`beta` needs at least one positive entry"));
    }
    Ok(())
}

/// Step score of one entropy row.
///
/// `weights` are the per-DoF stability weights, `beta` the per-DoF weights.
/// Without `beta` the row is averaged over DoF; with `beta` it is the
/// weighted sum, with no `1/7` factor.
#[inline]
pub fn row_score<T: Scalar>(entropy: &Row<T>, weights: Option<&Row<T>>, beta: Option<&Row<T>>) -> T {
    let mut acc = T::zero();
    for d in 0..DOF {
        let mut h = entropy[d];
        if let Some(w) = weights {
            h = w[d] * h;
        }
        match beta {
            Some(b) => acc += b[d] * h,
            None => acc += h,
        }
    }
    if beta.is_some() {
        acc
    } else {
        acc / T::from_count(DOF)
    }
}

/// Global mean entropy over all steps and DoF.
pub fn mean_entropy_score<T: Scalar>(r: &Rollout<T>) -> T {
    let steps = r.entropy().iter().map(|row| row_score(row, None, None));
    compensated_sum(steps) / T::from_count(r.len())
}

/// Per-step entropy, optionally stability-weighted and DoF-weighted.
pub fn per_step_entropy<T: Scalar>(
    r: &Rollout<T>,
    weights: Option<&[Row<T>]>,
    beta: Option<&Row<T>>,
) -> Result<Vec<T>> {
    if let Some(w) = weights {
        if w.len() != r.len() {
            return Err(Error::validation(format!(
                "weight matrix has {} rows, rollout `{}` has {} steps",
                w.len(),
                r.id(),
                r.len()
            )));
        }
    }
    if let Some(b) = beta {
        check_beta(b)?;
    }
    Ok(r
        .entropy()
        .iter()
        .enumerate()
        .map(|(t, row)| row_score(row, weights.map(|w| &w[t]), beta))
        .collect())
}

/// Max over stride-1 full-window means. Windows longer than the sequence
/// are clamped to the whole sequence.
pub fn window_max_score<T: Scalar>(e: &[T], w: usize) -> Result<T> {
    if e.is_empty() {
        return Err(Error::validation("cannot window-score an empty step sequence"));
    }
    check_window(w)?;
    let w = w.min(e.len());
    let mut acc = CompensatedSum::new();
    for &x in &e[..w] {
        acc.add(x);
    }
    let mut best = acc.value();
    for t in w..e.len() {
        acc.add(e[t]);
        acc.sub(e[t - w]);
        best = best.max(acc.value());
    }
    Ok(best / T::from_count(w))
}

/// Sign-flip indicator per step and DoF; zero counts as non-negative and the
/// first row is all `false`.
pub fn sign_flip_indicators<T: Scalar>(actions: &[Row<T>]) -> Vec<[bool; DOF]> {
    let mut out = Vec::with_capacity(actions.len());
    let mut prev: Option<&Row<T>> = None;
    for row in actions {
        let flips = match prev {
            None => [false; DOF],
            Some(p) => flip_row(p, row),
        };
        out.push(flips);
        prev = Some(row);
    }
    out
}

#[inline]
pub(crate) fn flip_row<T: Scalar>(prev: &Row<T>, cur: &Row<T>) -> [bool; DOF] {
    let mut flips = [false; DOF];
    for d in 0..DOF {
        flips[d] = non_negative(prev[d]) != non_negative(cur[d]);
    }
    flips
}

#[inline]
fn non_negative<T: Scalar>(x: T) -> bool {
    // -0.0 >= 0.0 holds, so negative zero lands on the non-negative side.
    x >= T::zero()
}

/// Stability weights: `alpha` where the sign flipped, `1 - alpha` elsewhere.
pub fn atr_weight_matrix<T: Scalar>(flips: &[[bool; DOF]], alpha: T) -> Result<Vec<Row<T>>> {
    check_alpha(alpha)?;
    Ok(flips.iter().map(|row| weight_row(row, alpha)).collect())
}

#[inline]
pub(crate) fn weight_row<T: Scalar>(flips: &[bool; DOF], alpha: T) -> Row<T> {
    let stable = T::one() - alpha;
    let mut w = [stable; DOF];
    for d in 0..DOF {
        if flips[d] {
            w[d] = alpha;
        }
    }
    w
}

fn reweighted_steps<T: Scalar>(r: &Rollout<T>, alpha: T, beta: Option<&Row<T>>) -> Result<Vec<T>> {
    let weights = atr_weight_matrix(&sign_flip_indicators(r.actions()), alpha)?;
    per_step_entropy(r, Some(&weights), beta)
}

/// Mean of stability-reweighted entropy over all steps and DoF.
pub fn atr_score<T: Scalar>(r: &Rollout<T>, alpha: T) -> Result<T> {
    let steps = reweighted_steps(r, alpha, None)?;
    Ok(compensated_sum(steps) / T::from_count(r.len()))
}

/// Window max of the DoF-averaged step entropy.
pub fn sliding_window_score<T: Scalar>(r: &Rollout<T>, w: usize) -> Result<T> {
    window_max_score(&per_step_entropy(r, None, None)?, w)
}

/// Window max of the DoF-averaged reweighted step entropy.
pub fn sw_atr_score<T: Scalar>(r: &Rollout<T>, w: usize, alpha: T) -> Result<T> {
    window_max_score(&reweighted_steps(r, alpha, None)?, w)
}

/// Window max of the DoF-weighted reweighted step entropy.
pub fn weighted_sw_atr_score<T: Scalar>(r: &Rollout<T>, w: usize, alpha: T, beta: &Row<T>) -> Result<T> {
    window_max_score(&reweighted_steps(r, alpha, Some(beta))?, w)
}

/// Scores a rollout with whichever variant `params` selects.
pub fn score<T: Scalar>(r: &Rollout<T>, params: &ScoreParams<T>) -> Result<T> {
    params.validate()?;
    // validate() guarantees the unwraps below for the matching variant
    match params.variant {
        Variant::MeanBaseline => Ok(mean_entropy_score(r)),
        Variant::Sw => sliding_window_score(r, params.w.unwrap()),
        Variant::Atr => atr_score(r, params.alpha.unwrap()),
        Variant::SwAtr => sw_atr_score(r, params.w.unwrap(), params.alpha.unwrap()),
        Variant::WeightedSwAtr => {
            weighted_sw_atr_score(r, params.w.unwrap(), params.alpha.unwrap(), params.beta.as_ref().unwrap())
        }
    }
}

/// Scores many rollouts in parallel; output order follows input order.
pub fn score_all<T: Scalar>(rollouts: &[Rollout<T>], params: &ScoreParams<T>) -> Result<Vec<T>> {
    use rayon::prelude::*;
    params.validate()?;
    rollouts.par_iter().map(|r| score(r, params)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::Outcome;

    fn rollout(entropy: Vec<Row<f64>>, actions: Vec<Row<f64>>) -> Rollout<f64> {
        Rollout::new("r", "s", "t", Outcome::Failure, actions, entropy).unwrap()
    }

    fn flat(t: usize, h: f64) -> Rollout<f64> {
        rollout(vec![[h; DOF]; t], vec![[0.5; DOF]; t])
    }

    /// Brute-force window maximum: every full window summed from scratch.
    fn brute_window_max(e: &[f64], w: usize) -> f64 {
        let w = w.min(e.len());
        (0..=e.len() - w)
            .map(|t| e[t..t + w].iter().sum::<f64>() / w as f64)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn mean_score_examples() {
        assert_eq!(mean_entropy_score(&flat(5, 0.0)), 0.0);
        assert_eq!(mean_entropy_score(&flat(1, 1.0)), 1.0);
        let r = rollout(vec![[1.0; DOF], [3.0; DOF]], vec![[0.1; DOF]; 2]);
        assert_eq!(mean_entropy_score(&r), 2.0);
    }

    #[test]
    fn per_step_entropy_examples() {
        let r = flat(4, 1.0);
        assert_eq!(per_step_entropy(&r, None, None).unwrap(), vec![1.0; 4]);

        let ones = vec![[1.0; DOF]; 4];
        let e = per_step_entropy(&r, Some(&ones), Some(&[1.0; DOF])).unwrap();
        assert_eq!(e, vec![7.0; 4]);

        let row: Row<f64> = std::array::from_fn(|d| (d + 1) as f64 / 7.0);
        let r = rollout(vec![row; 3], vec![[0.2; DOF]; 3]);
        let mut beta = [0.0; DOF];
        beta[0] = 1.0;
        let e = per_step_entropy(&r, Some(&vec![[1.0; DOF]; 3]), Some(&beta)).unwrap();
        for x in e {
            assert!((x - 1.0 / 7.0).abs() < 1e-15);
        }

        let short = vec![[1.0; DOF]; 2];
        assert!(per_step_entropy(&flat(3, 1.0), Some(&short), None).is_err());
    }

    #[test]
    fn window_max_examples() {
        assert_eq!(window_max_score(&[1.0, 1.0, 5.0, 1.0], 2).unwrap(), 3.0);
        assert_eq!(brute_window_max(&[1.0, 1.0, 5.0, 1.0], 2), 3.0);
        assert_eq!(window_max_score(&[2.0, 2.0, 2.0], 1).unwrap(), 2.0);
        let e = [0.3_f64, 0.9, 0.1, 0.4];
        assert!((window_max_score(&e, 4).unwrap() - 0.425).abs() < 1e-15);
        // clamped when the window is longer than the sequence
        assert!((window_max_score(&e, 40).unwrap() - 0.425).abs() < 1e-15);
        assert!(window_max_score::<f64>(&[], 3).is_err());
        assert!(window_max_score(&e, 0).is_err());
    }

    #[test]
    fn sign_flip_examples() {
        let column = |vals: &[f64]| -> Vec<Row<f64>> {
            vals.iter().map(|&v| {
                let mut row = [1.0; DOF];
                row[0] = v;
                row
            }).collect()
        };
        let c = sign_flip_indicators(&column(&[0.1, -0.2, 0.3]));
        assert_eq!(c.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![false, true, true]);
        let c = sign_flip_indicators(&column(&[0.0, -0.1]));
        assert_eq!(c.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![false, true]);
        let c = sign_flip_indicators(&column(&[0.0, -0.0, 0.0]));
        assert!(c.iter().all(|r| !r[0]));
        let c = sign_flip_indicators(&column(&[0.3, 0.2, 5.0]));
        assert!(c.iter().all(|r| r.iter().all(|f| !f)));
    }

    #[test]
    fn atr_weight_examples() {
        let zeros = vec![[false; DOF]; 3];
        let ones = vec![[true; DOF]; 3];
        assert!(atr_weight_matrix(&zeros, 0.9).unwrap().iter().flatten().all(|&w| (w - 0.1f64).abs() < 1e-15));
        assert!(atr_weight_matrix(&ones, 0.9).unwrap().iter().flatten().all(|&w| w == 0.9));
        let mixed = vec![[true, false, true, false, true, false, true]];
        assert!(atr_weight_matrix(&mixed, 0.5).unwrap().iter().flatten().all(|&w| w == 0.5));
        assert!(atr_weight_matrix(&mixed, 0.0).is_err());
        assert!(atr_weight_matrix(&mixed, 1.0).is_err());
    }

    #[test]
    fn atr_two_step_hand_oracle() {
        // DoF 0 has entropy [1, 1] and actions [+1, -1]; other DoF carry no entropy.
        let mut h = [0.0; DOF];
        h[0] = 1.0;
        let mut a0 = [0.5; DOF];
        let mut a1 = [0.5; DOF];
        a0[0] = 1.0;
        a1[0] = -1.0;
        let r = rollout(vec![h, h], vec![a0, a1]);
        // (0.1 * 1 + 0.9 * 1) / (7 * 2)
        assert!((atr_score(&r, 0.9).unwrap() - 1.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn planted_spike_fixture() {
        // reweighted step entropy 0.2 everywhere except ten steps at 2.0;
        // with flip-free actions and alpha = 0.5 the weights are uniformly 0.5
        let mut entropy = vec![[0.4; DOF]; 100];
        for row in &mut entropy[50..60] {
            *row = [4.0; DOF];
        }
        let r = rollout(entropy, vec![[0.3; DOF]; 100]);
        let steps = reweighted_steps(&r, 0.5, None).unwrap();
        let oracle = brute_window_max(&steps, 10);
        assert!((oracle - 2.0).abs() < 1e-12);
        assert!((sw_atr_score(&r, 10, 0.5).unwrap() - oracle).abs() < 1e-12);

        let oracle60 = brute_window_max(&steps, 60);
        let via_dispatch = score(&r, &ScoreParams::sw_atr(60, 0.9)).unwrap();
        let steps09 = reweighted_steps(&r, 0.9, None).unwrap();
        assert!((via_dispatch - brute_window_max(&steps09, 60)).abs() < 1e-12);
        assert!((oracle60 - (0.2 * 50.0 + 2.0 * 10.0) / 60.0).abs() < 1e-12);
    }

    #[test]
    fn gripper_only_beta_matches_single_axis_score() {
        let mut entropy = vec![[0.0; DOF]; 30];
        let mut actions = vec![[0.2; DOF]; 30];
        for t in 0..30 {
            entropy[t][DOF - 1] = 0.1 * ((t * 7) % 13) as f64;
            actions[t][DOF - 1] = if (t / 3) % 2 == 0 { 1.0 } else { -1.0 };
        }
        let r = rollout(entropy.clone(), actions.clone());
        let mut beta = [0.0; DOF];
        beta[DOF - 1] = 1.0;
        let got = weighted_sw_atr_score(&r, 5, 0.8, &beta).unwrap();

        let flips = sign_flip_indicators(&actions);
        let axis: Vec<f64> = (0..30)
            .map(|t| if flips[t][DOF - 1] { 0.8 } else { 1.0 - 0.8 } * entropy[t][DOF - 1])
            .collect();
        assert!((got - brute_window_max(&axis, 5)).abs() < 1e-12);
    }

    #[test]
    fn dispatch_reports_missing_fields() {
        let r = flat(3, 0.0);
        assert_eq!(score(&r, &ScoreParams::mean()).unwrap(), 0.0);
        let mut p = ScoreParams::<f64>::sw_atr(5, 0.9);
        p.alpha = None;
        let err = score(&r, &p).unwrap_err().to_string();
        assert!(err.contains("`alpha`"), "{err}");
        let mut p = ScoreParams::<f64>::weighted(5, 0.9, [1.0; DOF]);
        p.beta = None;
        assert!(score(&r, &p).unwrap_err().to_string().contains("`beta`"));
        let p = ScoreParams::<f64> { variant: Variant::Sw, w: None, alpha: None, beta: None };
        assert!(score(&r, &p).unwrap_err().to_string().contains("`w`"));
        assert!(score(&r, &ScoreParams::weighted(5, 0.9, [0.0; DOF])).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("median".parse::<Variant>().is_err());
    }
}
