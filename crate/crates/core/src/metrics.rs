//! ROC analysis with failures as the positive class.
//!
//! Decision rule everywhere: predict failure iff `score >= gamma`.
//! AUROC is the Mann-Whitney statistic with half credit for ties. Pair counts
//! are accumulated in integers, so the sort-based AUROC and the trapezoid
//! under the ROC points agree exactly before the final division.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rollout::Outcome;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint<T> {
    pub threshold: T,
    pub tpr: T,
    pub fpr: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocAnalysis<T> {
    /// Descending thresholds, starting from a `+inf` sentinel at (0, 0).
    pub points: Vec<RocPoint<T>>,
    pub auroc: T,
    pub youden_threshold: T,
    pub youden_j: T,
}

/// Thresholded confusion counts and derived rates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<&'static str>,
}

impl ClassificationReport {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Score groups in descending order: (score, failures, successes).
struct Groups<T> {
    groups: Vec<(T, u64, u64)>,
    positives: u64,
    negatives: u64,
}

fn check_inputs<T: Scalar>(scores: &[T], labels: &[Outcome]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::validation(format!("score {i} is not finite ({})", scores[i])));
    }
    Ok(())
}

fn grouped<T: Scalar>(scores: &[T], labels: &[Outcome]) -> Result<Groups<T>> {
    check_inputs(scores, labels)?;
    let positives = labels.iter().filter(|l| l.is_failure()).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Undefined(format!(
            "AUROC needs both classes; got {positives} failures and {negatives} successes"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut groups: Vec<(T, u64, u64)> = Vec::new();
    for i in order {
        let s = scores[i];
        let (pos, neg) = if labels[i].is_failure() { (1, 0) } else { (0, 1) };
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                g.1 += pos;
                g.2 += neg;
            }
            _ => groups.push((s, pos, neg)),
        }
    }
    Ok(Groups { groups, positives, negatives })
}

fn ratio<T: Scalar>(num: u128, den: u128) -> T {
    T::lit(num as f64 / den as f64)
}

/// Probability that a random failure outscores a random success, ties at 1/2.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[Outcome]) -> Result<T> {
    let g = grouped(scores, labels)?;
    let mut negatives_above: u64 = 0;
    let mut twice_u: u128 = 0;
    for &(_, pos, neg) in &g.groups {
        let below = g.negatives - negatives_above - neg;
        twice_u += 2 * pos as u128 * below as u128 + pos as u128 * neg as u128;
        negatives_above += neg;
    }
    Ok(ratio(twice_u, 2 * g.positives as u128 * g.negatives as u128))
}

/// Full ROC sweep over the observed scores plus the Youden-optimal threshold.
///
/// Among thresholds that maximize `J = TPR - FPR` the one with the highest
/// TPR wins, then the smallest threshold.
pub fn roc_analysis<T: Scalar>(scores: &[T], labels: &[Outcome]) -> Result<RocAnalysis<T>> {
    let g = grouped(scores, labels)?;
    let (p, n) = (g.positives as u128, g.negatives as u128);

    let mut points = Vec::with_capacity(g.groups.len() + 1);
    points.push(RocPoint { threshold: T::infinity(), tpr: T::zero(), fpr: T::zero() });

    let (mut tp, mut fp) = (0u128, 0u128);
    let mut twice_area: u128 = 0;
    // Youden in integer form: J * P * N = tp * N - fp * P
    let mut best: (i128, u128, T) = (0, 0, T::infinity());
    for &(s, pos, neg) in &g.groups {
        let (tp0, fp0) = (tp, fp);
        tp += pos as u128;
        fp += neg as u128;
        twice_area += (fp - fp0) * (tp + tp0);
        points.push(RocPoint { threshold: s, tpr: ratio(tp, p), fpr: ratio(fp, n) });

        let j = (tp * n) as i128 - (fp * p) as i128;
        // descending scan: a later tie on (J, TPR) is a smaller threshold
        if j > best.0 || (j == best.0 && tp >= best.1) {
            best = (j, tp, s);
        }
    }

    Ok(RocAnalysis {
        points,
        auroc: ratio(twice_area, 2 * p * n),
        youden_threshold: best.2,
        youden_j: T::lit(best.0 as f64 / (p * n) as f64),
    })
}

/// Confusion counts at a fixed threshold, predicting failure iff `score >= gamma`.
pub fn classification_metrics<T: Scalar>(
    scores: &[T],
    labels: &[Outcome],
    gamma: T,
) -> Result<ClassificationReport> {
    check_inputs(scores, labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= gamma, l.is_failure()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let mut undefined = Vec::new();
    let mut div = |num: usize, den: usize, name: &'static str| {
        if den == 0 {
            undefined.push(name);
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let accuracy = div(tp + tn, tp + fp + tn + fn_, "accuracy");
    let precision = div(tp, tp + fp, "precision");
    let recall = div(tp, tp + fn_, "recall");
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1");
        0.0
    };
    Ok(ClassificationReport { accuracy, precision, recall, f1, tp, fp, tn, fn_, undefined })
}
