//! Evaluation harnesses: method sweeps over comparable count and distance,
//! desiderata sensitivity, and decision scoring of credible intervals.

mod decision;
mod sensitivity;
mod sweep;
mod task;

pub use decision::{correctness_probability_density, decision_metrics, gaussian_sigma, z_span_90, DecisionError, DecisionMetrics, DecisionResponse, LOG_FLOOR};
pub use sensitivity::{run_sensitivity, LambdaKind, SensitivityPair, SensitivityReport, SensitivityRow, SensitivitySpec, SensitivitySummary};
pub use sweep::{aggregate, run_sweep, Axis, CaseRecord, DistanceBins, EvalReport, MetricSummary, ReportCell, SweepSpec, EVAL_REPORT_VERSION};
pub use task::SyntheticTask;

use thiserror::Error;

use crate::explain::ExplainError;
use crate::methods::MethodError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

macro_rules! via_explain {
    ($($t:ty),*) => {$(
        impl From<$t> for EvalError {
            fn from(e: $t) -> Self {
                EvalError::Explain(e.into())
            }
        }
    )*};
}

via_explain!(
    MethodError,
    crate::comparables::ComparablesError,
    crate::predictors::PredictError,
    crate::schema::SchemaError,
    crate::schema::IngestError
);

/// Mean and population standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
