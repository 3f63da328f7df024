//! Datasets of rollouts, the calibration/test split, file I/O and the
//! synthetic generator.

mod io;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rollout::{Outcome, Rollout};
use crate::scalar::Scalar;

pub use io::{load, read_jsonl, save, write_jsonl};
pub use synth::{generate, BenignSpike, FailureSpike, Oscillation, SyntheticConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" | "calibration" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split `{other}` (expected train or test)"))),
        }
    }
}

/// Rollouts with unique ids and an optional train/test assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T = f64> {
    rollouts: Vec<Rollout<T>>,
    splits: BTreeMap<String, Split>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(rollouts: Vec<Rollout<T>>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(rollouts.len());
        for r in &rollouts {
            if !seen.insert(r.id()) {
                return Err(Error::validation(format!("duplicate rollout id `{}`", r.id())));
            }
        }
        Ok(Self { rollouts, splits: BTreeMap::new() })
    }

    /// Attaches explicit assignments; every key must name a rollout.
    pub fn with_splits(mut self, splits: BTreeMap<String, Split>) -> Result<Self> {
        let ids: HashSet<&str> = self.rollouts.iter().map(|r| r.id()).collect();
        if let Some(unknown) = splits.keys().find(|k| !ids.contains(k.as_str())) {
            return Err(Error::validation(format!("split assignment for unknown rollout `{unknown}`")));
        }
        self.splits = splits;
        Ok(self)
    }

    pub fn rollouts(&self) -> &[Rollout<T>] {
        &self.rollouts
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Rollout<T>> {
        self.rollouts.iter().find(|r| r.id() == id)
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.splits.get(id).copied()
    }

    pub fn splits(&self) -> &BTreeMap<String, Split> {
        &self.splits
    }

    /// True when every rollout has an assignment.
    pub fn is_split(&self) -> bool {
        !self.rollouts.is_empty() && self.rollouts.iter().all(|r| self.splits.contains_key(r.id()))
    }

    /// Rollouts of one part, in dataset order.
    pub fn part(&self, split: Split) -> Vec<Rollout<T>> {
        self.rollouts
            .iter()
            .filter(|r| self.split_of(r.id()) == Some(split))
            .cloned()
            .collect()
    }

    /// Seeded 50/50 split, stratified by (task, label).
    ///
    /// Each stratum is shuffled and its first `ceil(n/2)` members go to train.
    /// If that leaves the test side empty (every stratum a singleton), the
    /// last singleton stratum is moved to test so both sides are non-empty.
    pub fn split(mut self, seed: u64) -> Result<Self> {
        if self.rollouts.len() < 2 {
            return Err(Error::validation("splitting needs at least two rollouts"));
        }
        let mut strata: BTreeMap<(&str, Outcome), Vec<usize>> = BTreeMap::new();
        for (i, r) in self.rollouts.iter().enumerate() {
            strata.entry((r.task(), r.label())).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assign = vec![Split::Train; self.rollouts.len()];
        let mut last_singleton = None;
        for members in strata.values_mut() {
            members.shuffle(&mut rng);
            let n_train = members.len().div_ceil(2);
            for &i in &members[n_train..] {
                assign[i] = Split::Test;
            }
            if members.len() == 1 {
                last_singleton = Some(members[0]);
            }
        }
        if !assign.contains(&Split::Test) {
            assign[last_singleton.expect("all strata are singletons")] = Split::Test;
        }
        self.splits = self
            .rollouts
            .iter()
            .zip(assign)
            .map(|(r, s)| (r.id().to_string(), s))
            .collect();
        Ok(self)
    }

    /// Splits with `seed` unless every rollout already has an assignment.
    pub fn ensure_split(self, seed: u64) -> Result<Self> {
        if self.is_split() {
            Ok(self)
        } else {
            self.split(seed)
        }
    }
}

/// Draws `n` rollouts, keeping the failure/success proportions (each class
/// keeps at least one member when `n >= 2`). Input order is preserved.
pub fn stratified_subsample<T: Scalar>(rollouts: &[Rollout<T>], n: usize, seed: u64) -> Result<Vec<Rollout<T>>> {
    if n == 0 {
        return Err(Error::validation("subsample size must be at least 1"));
    }
    if n >= rollouts.len() {
        return Ok(rollouts.to_vec());
    }
    let (mut failures, mut successes): (Vec<usize>, Vec<usize>) =
        (0..rollouts.len()).partition(|&i| rollouts[i].label().is_failure());
    let keep_both = usize::from(n >= 2);
    let lo = (keep_both * usize::from(!failures.is_empty())).max(n.saturating_sub(successes.len()));
    let hi = failures.len().min(n - keep_both * usize::from(!successes.is_empty()));
    let target = ((n * failures.len()) as f64 / rollouts.len() as f64).round() as usize;
    let n_fail = target.clamp(lo, hi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    failures.shuffle(&mut rng);
    successes.shuffle(&mut rng);
    let mut keep: Vec<usize> = failures[..n_fail].iter().chain(&successes[..n - n_fail]).copied().collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| rollouts[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::DOF;

    fn toy(id: &str, task: &str, label: Outcome) -> Rollout<f64> {
        Rollout::new(id, "suite", task, label, vec![[0.1; DOF]; 3], vec![[0.5; DOF]; 3]).unwrap()
    }

    #[test]
    fn subsample_keeps_proportions_and_order() {
        let rollouts: Vec<_> = (0..30)
            .map(|i| toy(&format!("r{i:02}"), "t", if i % 3 == 0 { Outcome::Failure } else { Outcome::Success }))
            .collect();
        let sub = stratified_subsample(&rollouts, 9, 1).unwrap();
        assert_eq!(sub.len(), 9);
        assert_eq!(sub.iter().filter(|r| r.label().is_failure()).count(), 3);
        assert!(sub.windows(2).all(|p| p[0].id() < p[1].id()));
        assert_eq!(sub, stratified_subsample(&rollouts, 9, 1).unwrap());
        let two = stratified_subsample(&rollouts, 2, 5).unwrap();
        assert_eq!(two.iter().filter(|r| r.label().is_failure()).count(), 1);
        assert_eq!(stratified_subsample(&rollouts, 99, 0).unwrap().len(), 30);
    }

    fn counts(ds: &Dataset<f64>, split: Split) -> (usize, usize) {
        let part = ds.part(split);
        let f = part.iter().filter(|r| r.label().is_failure()).count();
        (f, part.len() - f)
    }

    #[test]
    fn four_rollouts_split_one_per_class_per_side() {
        let ds = Dataset::new(vec![
            toy("a", "t", Outcome::Success),
            toy("b", "t", Outcome::Success),
            toy("c", "t", Outcome::Failure),
            toy("d", "t", Outcome::Failure),
        ])
        .unwrap()
        .split(7)
        .unwrap();
        assert_eq!(counts(&ds, Split::Train), (1, 1));
        assert_eq!(counts(&ds, Split::Test), (1, 1));
    }

    #[test]
    fn split_is_seeded() {
        let make = || {
            Dataset::new((0..40).map(|i| toy(&format!("r{i}"), "t", if i % 3 == 0 { Outcome::Failure } else { Outcome::Success })).collect())
                .unwrap()
        };
        let a = make().split(11).unwrap();
        let b = make().split(11).unwrap();
        let c = make().split(12).unwrap();
        assert_eq!(a.splits(), b.splits());
        assert_ne!(a.splits(), c.splits());
    }

    #[test]
    fn odd_strata_give_extra_to_train() {
        // 101 rollouts over three tasks; each stratum sends ceil(n/2) to train
        let rollouts: Vec<_> = (0..101)
            .map(|i| toy(&format!("r{i}"), ["x", "y", "z"][i % 3], if i % 2 == 0 { Outcome::Failure } else { Outcome::Success }))
            .collect();
        let mut expected_train = 0;
        let mut sizes: BTreeMap<(String, Outcome), usize> = BTreeMap::new();
        for r in &rollouts {
            *sizes.entry((r.task().to_string(), r.label())).or_default() += 1;
        }
        for n in sizes.values() {
            expected_train += n.div_ceil(2);
        }
        let ds = Dataset::new(rollouts).unwrap().split(3).unwrap();
        let train = ds.part(Split::Train).len();
        assert_eq!(train, expected_train);
        assert_eq!(train + ds.part(Split::Test).len(), 101);
        assert_eq!(train, 53); // six strata of sizes 17,17,17,17,17,16
    }

    #[test]
    fn singleton_strata_still_fill_test() {
        let ds = Dataset::new(vec![toy("a", "t1", Outcome::Success), toy("b", "t2", Outcome::Failure)])
            .unwrap()
            .split(0)
            .unwrap();
        assert_eq!(ds.part(Split::Train).len(), 1);
        assert_eq!(ds.part(Split::Test).len(), 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Dataset::new(vec![toy("a", "t", Outcome::Success), toy("a", "t", Outcome::Failure)]).is_err());
        let one = Dataset::new(vec![toy("a", "t", Outcome::Success)]).unwrap();
        assert!(one.split(0).is_err());
    }
}
