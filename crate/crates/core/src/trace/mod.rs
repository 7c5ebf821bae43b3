//! Counterfactual trace adjustments.
//!
//! A trace walks from a comparable to the subject through intermediate
//! hypothetical instances. Each leg is an affine function fit to the model's
//! predictions, and the path is shaped by five penalties: faithfulness to the
//! model, sparse changes, each attribute changing once, no direction
//! reversals, and evenly sized value steps.

mod fit;
mod loss;
mod model;
mod steps;

pub use fit::{default_segments, fit_trace, TraceFit};
pub use loss::{evaluate_loss, loss_and_gradient, LossBreakdown, TraceParams};
pub use model::TraceModel;
pub use steps::{extract_steps, trace_adjusted_estimate, AttributeChange, Step, TraceSteps};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineError;
use crate::predictors::PredictError;

/// Version tag of the serialized trace document.
pub const TRACE_DOCUMENT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("comparable and subject are identical; there is nothing to trace")]
    NoDifference,
    #[error("trace optimization diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("expected {expected}-dimensional vector, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("point is not on the trace path")]
    OutOfDomain,
    #[error("invalid trace configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Loss weights and optimizer settings for fitting one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesiderataConfig {
    pub lambda_faithfulness: f64,
    pub lambda_sparsity: f64,
    pub lambda_disjointness: f64,
    pub lambda_monotonicity: f64,
    pub lambda_evenness: f64,
    /// Change threshold in standardized units.
    pub delta: f64,
    /// Segment count; `None` picks one segment per changed attribute.
    pub segments: Option<usize>,
    pub samples_per_segment: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub init_std: f64,
    pub seed: u64,
    /// Epochs without improvement before the learning rate is cut.
    pub lr_patience: usize,
    pub lr_decay: f64,
    /// Training stops once the learning rate has been cut this many times.
    pub max_lr_reductions: usize,
}

impl Default for DesiderataConfig {
    fn default() -> Self {
        Self {
            lambda_faithfulness: 1.0,
            lambda_sparsity: 10.0,
            lambda_disjointness: 10.0,
            lambda_monotonicity: 1.0,
            lambda_evenness: 1.0,
            delta: 0.01,
            segments: None,
            samples_per_segment: 8,
            max_epochs: 2000,
            learning_rate: 0.8,
            init_std: 0.1,
            seed: 0,
            lr_patience: 50,
            lr_decay: 0.5,
            max_lr_reductions: 3,
        }
    }
}

impl DesiderataConfig {
    /// Faithfulness only; every shape penalty off.
    pub fn faithfulness_only() -> Self {
        Self {
            lambda_sparsity: 0.0,
            lambda_disjointness: 0.0,
            lambda_monotonicity: 0.0,
            lambda_evenness: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |msg: &str| Err(TraceError::InvalidConfig(msg.to_string()));
        if !(self.lambda_faithfulness > 0.0 && self.lambda_faithfulness.is_finite()) {
            return bad("faithfulness weight must be positive");
        }
        let others = [
            self.lambda_sparsity,
            self.lambda_disjointness,
            self.lambda_monotonicity,
            self.lambda_evenness,
        ];
        if others.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("loss weights must be finite and nonnegative");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if self.segments == Some(0) {
            return bad("segment count must be positive");
        }
        if self.samples_per_segment == 0 || self.max_epochs == 0 {
            return bad("samples per segment and epochs must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return bad("init std must be nonnegative");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("learning-rate decay must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Serialized form of a trained trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub version: u32,
    #[serde(flatten)]
    pub model: TraceModel,
    pub config: DesiderataConfig,
    pub loss: LossBreakdown,
}

impl TraceDocument {
    pub fn new(model: TraceModel, config: DesiderataConfig, loss: LossBreakdown) -> Self {
        Self {
            version: TRACE_DOCUMENT_VERSION,
            model,
            config,
            loss,
        }
    }
}
