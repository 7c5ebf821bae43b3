//! Runs the four explanation methods over a selected comparable set.
//!
//! Per-comparable work (local surrogates, traces) is done once for the
//! largest set and reused by every nested prefix of it.

use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{fit_local_linear, fit_regression, regression_estimate, BaselineError, LocalLinearModel, LocalSampling};
use crate::comparables::{reconciled, weighted_average, ComparableSet, Method, ReconciledEstimate, ValueChannel};
use crate::predictors::{PredictError, Predictor};
use crate::schema::FeatureLayout;
use crate::trace::{fit_trace, DesiderataConfig, TraceError, TraceFit};

#[derive(Debug, Error)]
pub enum MethodError {
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Trace(TraceError),
    #[error(transparent)]
    Baseline(BaselineError),
}

impl From<TraceError> for MethodError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Predict(p) | TraceError::Baseline(BaselineError::Predict(p)) => MethodError::Predict(p),
            other => MethodError::Trace(other),
        }
    }
}

impl From<BaselineError> for MethodError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Predict(p) => MethodError::Predict(p),
            other => MethodError::Baseline(other),
        }
    }
}

/// splitmix64 finalizer; derives independent seeds for sub-streams.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed stream for the comparable at `row` (or selection position when it has no row).
pub fn comparable_seed(seed: u64, set: &ComparableSet, i: usize) -> u64 {
    derive_seed(seed, set.comparables[i].row.unwrap_or(i) as u64)
}

/// Local surrogates around every comparable of `set`.
pub fn local_models(
    p: &dyn Predictor,
    layout: &FeatureLayout,
    set: &ComparableSet,
    sampling: LocalSampling,
    seed: u64,
) -> Result<Vec<LocalLinearModel>, MethodError> {
    (0..set.len())
        .into_par_iter()
        .map(|i| Ok(fit_local_linear(p, layout, &set.comparables[i].encoded, sampling, comparable_seed(seed, set, i))?))
        .collect()
}

/// Traces from every comparable to the subject. A comparable identical to
/// the subject needs no trace and gets `None` when `allow_identical` is set.
pub fn traces(
    p: &dyn Predictor,
    layout: &FeatureLayout,
    set: &ComparableSet,
    target_scale: f64,
    cfg: &DesiderataConfig,
    seed: u64,
    allow_identical: bool,
) -> Result<Vec<Option<TraceFit>>, MethodError> {
    (0..set.len())
        .into_par_iter()
        .map(|i| {
            let c = &set.comparables[i].encoded;
            if allow_identical && *c == set.subject_encoded {
                return Ok(None);
            }
            let cfg = DesiderataConfig {
                seed: comparable_seed(seed, set, i),
                ..cfg.clone()
            };
            Ok(Some(fit_trace(p, layout, c, &set.subject_encoded, target_scale, &cfg)?))
        })
        .collect()
}

/// Artifacts computed per comparable, aligned with a set's selection order.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub local: Vec<LocalLinearModel>,
    pub traces: Vec<Option<TraceFit>>,
}

/// Reconciled estimate of `method` on `set` read through `channel`.
///
/// `artifacts` must cover at least the comparables of `set` for the methods
/// that need them.
pub fn estimate(
    method: Method,
    set: &ComparableSet,
    channel: ValueChannel,
    artifacts: &Artifacts,
) -> Result<ReconciledEstimate, MethodError> {
    let k = set.len();
    match method {
        Method::ComparablesOnly => Ok(weighted_average(set, channel)),
        Method::LinearRegression => Ok(regression_estimate(&fit_regression(set, channel), set)?),
        Method::LinearAdjustments => {
            let values: Vec<f64> = set
                .comparables
                .iter()
                .zip(&artifacts.local[..k])
                .map(|(c, m)| {
                    let shift: f64 = m
                        .weights
                        .iter()
                        .zip(set.subject_encoded.iter().zip(&c.encoded))
                        .map(|(w, (s, x))| w * (s - x))
                        .sum();
                    c.value(channel) + shift
                })
                .collect();
            Ok(reconciled(method, &values, &set.similarities))
        }
        Method::TraceAdjustments => {
            let values: Vec<f64> = set
                .comparables
                .iter()
                .zip(&artifacts.traces[..k])
                .map(|(c, t)| match t {
                    Some(fit) => fit.model.adjusted_value(c.value(channel)),
                    None => c.value(channel),
                })
                .collect();
            Ok(reconciled(method, &values, &set.similarities))
        }
    }
}

/// Computes whatever per-comparable artifacts `methods` need.
#[allow(clippy::too_many_arguments)]
pub fn artifacts_for(
    methods: &[Method],
    p: &dyn Predictor,
    layout: &FeatureLayout,
    set: &ComparableSet,
    target_scale: f64,
    cfg: &DesiderataConfig,
    sampling: LocalSampling,
    seed: u64,
    allow_identical: bool,
) -> Result<Artifacts, MethodError> {
    let mut out = Artifacts::default();
    if methods.contains(&Method::LinearAdjustments) {
        out.local = local_models(p, layout, set, sampling, seed)?;
    }
    if methods.contains(&Method::TraceAdjustments) {
        out.traces = traces(p, layout, set, target_scale, cfg, seed, allow_identical)?;
    }
    Ok(out)
}
