//! Linear explanation baselines: a regression over the comparables and
//! per-comparable local linear adjustments fit by perturbation sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparables::{reconciled, Comparable, ComparableSet, Method, ReconciledEstimate, ValueChannel};
use crate::linalg::{ridge, FitDiagnostics};
use crate::predictors::{PredictError, Predictor};
use crate::schema::{BlockKind, FeatureLayout, Instance, Standardizer, StandardizedVector, Value};

/// Ridge penalty on regression weights; the bias is never penalized.
pub const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("expected {expected}-dimensional vector, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} samples for a {dim}-dimensional local fit, got {got}")]
    TooFewSamples { needed: usize, dim: usize, got: usize },
    #[error(transparent)]
    Predict(#[from] PredictError),
}

fn check_dim(expected: usize, got: usize) -> Result<(), BaselineError> {
    if expected == got {
        Ok(())
    } else {
        Err(BaselineError::DimensionMismatch { expected, got })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub diagnostics: FitDiagnostics,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, BaselineError> {
        check_dim(self.weights.len(), x.len())?;
        Ok(self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
    }
}

/// Least-squares fit of the chosen value channel on the comparables' encoded attributes.
pub fn fit_regression(set: &ComparableSet, channel: ValueChannel) -> LinearModel {
    let xs: Vec<Vec<f64>> = set.comparables.iter().map(|c| c.encoded.clone()).collect();
    let fit = ridge(&xs, &set.values(channel), None, RIDGE_LAMBDA);
    LinearModel {
        weights: fit.weights,
        bias: fit.bias,
        diagnostics: fit.diagnostics,
    }
}

/// Regression value at the subject; bounds span the fitted values at the comparables.
pub fn regression_estimate(model: &LinearModel, set: &ComparableSet) -> Result<ReconciledEstimate, BaselineError> {
    let point = model.predict(&set.subject_encoded)?;
    let fitted = set
        .comparables
        .iter()
        .map(|c| model.predict(&c.encoded))
        .collect::<Result<Vec<_>, _>>()?;
    let mut est = reconciled(Method::LinearRegression, &fitted, &set.similarities);
    est.point_estimate = point;
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalSampling {
    pub radius: f64,
    pub n_samples: usize,
}

impl Default for LocalSampling {
    fn default() -> Self {
        Self {
            radius: 1.0,
            n_samples: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalLinearModel {
    pub anchor: StandardizedVector,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub sampling_radius: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Local surrogate around `anchor`: perturbations drawn uniformly in an L∞
/// ball of `radius` (categorical blocks resample their level half the time),
/// weighted by a Gaussian kernel of bandwidth `radius`, fit by weighted ridge
/// regression on the predictor's outputs.
pub fn fit_local_linear(
    p: &dyn Predictor,
    layout: &FeatureLayout,
    anchor: &[f64],
    sampling: LocalSampling,
    seed: u64,
) -> Result<LocalLinearModel, BaselineError> {
    let dim = layout.dim();
    check_dim(dim, anchor.len())?;
    check_dim(p.dim(), dim)?;
    if sampling.n_samples < dim + 1 {
        return Err(BaselineError::TooFewSamples {
            needed: dim + 1,
            dim,
            got: sampling.n_samples,
        });
    }
    let radius = sampling.radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(sampling.n_samples);
    for _ in 0..sampling.n_samples {
        let mut x = anchor.to_vec();
        for block in layout.blocks() {
            match block.kind {
                BlockKind::Numeric => x[block.start] += rng.random_range(-radius..=radius),
                BlockKind::Categorical => {
                    if rng.random_bool(0.5) {
                        let level = rng.random_range(0..block.len);
                        for (j, c) in block.columns().enumerate() {
                            x[c] = if j == level { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
        }
        xs.push(x);
    }
    let ys = p.predict(&xs)?;
    let kernel: Vec<f64> = xs
        .iter()
        .map(|x| {
            let d2: f64 = x.iter().zip(anchor).map(|(a, b)| (a - b).powi(2)).sum();
            (-d2 / (2.0 * radius * radius)).exp()
        })
        .collect();
    let fit = ridge(&xs, &ys, Some(&kernel), RIDGE_LAMBDA);
    Ok(LocalLinearModel {
        anchor: anchor.to_vec(),
        weights: fit.weights,
        bias: fit.bias,
        sampling_radius: radius,
        n_samples: sampling.n_samples,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDelta {
    pub attribute: String,
    pub from: Value,
    pub to: Value,
    /// Raw numeric difference; absent for categorical attributes.
    pub value_change: Option<f64>,
    pub money_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentBreakdown {
    pub anchor: ValueChannel,
    pub anchor_value: f64,
    pub deltas: Vec<AttributeDelta>,
    pub total_adjustment: f64,
    pub adjusted_value: f64,
}

/// Per-attribute `w·(x_s − x_c)` summed over each attribute's encoded columns.
pub fn block_deltas(weights: &[f64], layout: &FeatureLayout, from: &[f64], to: &[f64]) -> Vec<f64> {
    layout
        .blocks()
        .iter()
        .map(|b| b.columns().map(|c| weights[c] * (to[c] - from[c])).sum())
        .collect()
}

/// Adjusts a comparable toward the subject with the local model's factors.
pub fn linear_adjust(
    model: &LocalLinearModel,
    comparable: &Comparable,
    subject: &Instance,
    subject_encoded: &[f64],
    std: &Standardizer,
    anchor: ValueChannel,
) -> Result<AdjustmentBreakdown, BaselineError> {
    check_dim(model.weights.len(), subject_encoded.len())?;
    check_dim(model.weights.len(), comparable.encoded.len())?;
    let money = block_deltas(&model.weights, std.layout(), &comparable.encoded, subject_encoded);
    let deltas: Vec<AttributeDelta> = std
        .schema()
        .attributes
        .iter()
        .enumerate()
        .map(|(i, attr)| {
            let from = comparable.instance.values[i].clone();
            let to = subject.values[i].clone();
            let value_change = match (&from, &to) {
                (Value::Number(a), Value::Number(b)) => Some(b - a),
                _ => None,
            };
            AttributeDelta {
                attribute: attr.name.clone(),
                from,
                to,
                value_change,
                money_delta: money[i],
            }
        })
        .collect();
    let total_adjustment: f64 = money.iter().sum();
    let anchor_value = comparable.value(anchor);
    Ok(AdjustmentBreakdown {
        anchor,
        anchor_value,
        deltas,
        total_adjustment,
        adjusted_value: anchor_value + total_adjustment,
    })
}
