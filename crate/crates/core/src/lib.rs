//! Failure-risk scoring for robot-policy rollouts from per-step, per-DoF
//! token entropy and the executed action trace.
//!
//! The crate provides the global-mean baseline and the windowed,
//! motion-reweighted and DoF-weighted scores, ROC/Youden evaluation,
//! Bayesian-optimization calibration, a streaming monitor, and a synthetic
//! rollout generator. Scoring, metrics and monitoring are generic over
//! [`Scalar`] (`f32` or `f64`); the aliases below fix the scalar for the
//! common cases. File I/O, the generator and the Gaussian-process surrogate
//! work in `f64`.

pub mod calibrate;
pub mod data;
pub mod error;
pub mod metrics;
pub mod monitor;
pub mod rollout;
pub mod scalar;
pub mod scoring;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use calibrate::{calibrate, CalibrationConfig, CalibrationResult, SearchSpace, Trial};
pub use data::{Dataset, Split, SyntheticConfig};
pub use metrics::{auroc, classification_metrics, roc_analysis, ClassificationReport, RocAnalysis};
pub use monitor::{Monitor, PushOutcome};
pub use rollout::{Logits, Outcome, Rollout, Row, TokenDistribution, BINS, DOF};
pub use scoring::{score, score_all, ScoreParams, Variant};

pub type Rollout64 = Rollout<f64>;
pub type Rollout32 = Rollout<f32>;
pub type ScoreParams64 = ScoreParams<f64>;
pub type ScoreParams32 = ScoreParams<f32>;
pub type Monitor64 = Monitor<f64>;
pub type Monitor32 = Monitor<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type RocAnalysis64 = RocAnalysis<f64>;
pub type RocAnalysis32 = RocAnalysis<f32>;
