//! End-to-end explanations: select comparables for a subject, run one
//! method, and package everything a comparison grid displays.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{fit_regression, linear_adjust, AdjustmentBreakdown, BaselineError, LinearModel, LocalLinearModel, LocalSampling};
use crate::comparables::{select_from_pool, Bounds, ComparableSet, ComparablesError, Method, ReconciledEstimate, ValueChannel};
use crate::methods::{self, Artifacts, MethodError};
use crate::predictors::{PredictError, Predictor};
use crate::schema::{AttributeDef, ColumnEncoding, Dataset, IngestError, Instance, SchemaError, Standardizer, StandardizedVector, Value};
use crate::trace::{extract_steps, DesiderataConfig, TraceDocument, TraceError, TraceFit, TraceSteps};

pub const EXPLANATION_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("comparable and subject are identical; there is nothing to trace")]
    NoDifference,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Trace(TraceError),
    #[error(transparent)]
    Baseline(BaselineError),
}

impl From<MethodError> for ExplainError {
    fn from(e: MethodError) -> Self {
        match e {
            MethodError::Predict(p) => ExplainError::Predict(p),
            MethodError::Trace(TraceError::NoDifference) => ExplainError::NoDifference,
            MethodError::Trace(TraceError::InvalidConfig(msg)) => ExplainError::InvalidRequest(msg),
            MethodError::Trace(t) => ExplainError::Trace(t),
            MethodError::Baseline(b) => ExplainError::Baseline(b),
        }
    }
}

impl From<ComparablesError> for ExplainError {
    fn from(e: ComparablesError) -> Self {
        match e {
            ComparablesError::KTooLarge { k, available } => {
                ExplainError::InvalidRequest(format!("k = {k} is invalid for {available} candidate rows"))
            }
            ComparablesError::EmptyInput => ExplainError::InvalidRequest("no comparables".into()),
            ComparablesError::Predict(p) => ExplainError::Predict(p),
            ComparablesError::Schema(s) => ExplainError::Schema(s),
        }
    }
}

impl From<BaselineError> for ExplainError {
    fn from(e: BaselineError) -> Self {
        MethodError::from(e).into()
    }
}

/// Which instance to explain.
#[derive(Debug, Clone, PartialEq)]
pub enum SubjectRef {
    /// A dataset row by id (or positional index); the row is excluded from its own comparables.
    Id(String),
    /// An instance not in the dataset.
    Inline(Instance),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOptions {
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    #[serde(default)]
    pub desiderata: DesiderataConfig,
    #[serde(default)]
    pub sampling: LocalSampling,
}

impl ExplainOptions {
    pub fn new(method: Method, k: usize, seed: u64) -> Self {
        Self {
            method,
            k,
            seed,
            desiderata: DesiderataConfig::default(),
            sampling: LocalSampling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct TraceKey {
    dataset: String,
    subject: String,
    comparable: String,
    config: String,
    seed: u64,
}

/// Trained traces keyed by (dataset, subject, comparable, config, seed), so
/// repeated requests never retrain.
#[derive(Debug, Default)]
pub struct TraceCache {
    entries: Mutex<HashMap<TraceKey, Arc<TraceFit>>>,
}

impl TraceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("trace cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &TraceKey) -> Option<Arc<TraceFit>> {
        self.entries.lock().expect("trace cache poisoned").get(key).cloned()
    }

    fn insert(&self, key: TraceKey, fit: Arc<TraceFit>) {
        self.entries.lock().expect("trace cache poisoned").insert(key, fit);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectView {
    pub id: Option<String>,
    pub values: Vec<Value>,
    /// Known only for dataset rows.
    pub actual_value: Option<f64>,
    pub ai_prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparableView {
    pub row: Option<usize>,
    pub id: Option<String>,
    pub values: Vec<Value>,
    pub actual_value: f64,
    pub ai_prediction: f64,
    /// `(prediction − actual) / actual`; absent when the actual value is zero.
    pub relative_error: Option<f64>,
    pub error_label: Option<String>,
    pub distance: f64,
    pub similarity: f64,
    /// Comparable value after the method's adjustments, for adjustment methods.
    pub adjusted_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateView {
    pub point_estimate: f64,
    pub bounds: Bounds,
    /// Estimates are always displayed as approximate.
    pub approximate: bool,
}

/// Regression weight of one encoded column, with its raw-unit slope for numeric attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFactor {
    pub attribute: String,
    pub level: Option<String>,
    pub weight: f64,
    pub per_unit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodDetail {
    Comparables,
    Regression {
        model: LinearModel,
        factors: Vec<RegressionFactor>,
    },
    LinearAdjust {
        adjustments: Vec<AdjustmentBreakdown>,
        local_models: Vec<LocalLinearModel>,
    },
    Trace {
        steps: Vec<TraceSteps>,
        traces: Vec<TraceDocument>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub version: u32,
    pub dataset: String,
    pub provenance: String,
    pub method: Method,
    pub k: usize,
    pub seed: u64,
    pub attributes: Vec<AttributeDef>,
    pub target: TargetInfo,
    pub subject: SubjectView,
    pub comparables: Vec<ComparableView>,
    /// Estimate of the subject's actual value from the comparables' actual values.
    pub estimate: EstimateView,
    /// The same method run on the comparables' AI predictions.
    pub prediction_estimate: ReconciledEstimate,
    /// `|prediction_estimate − subject AI prediction|`
    pub unfaithfulness: f64,
    pub detail: MethodDetail,
}

/// `(prediction − actual) / actual` with a "7.6% lower" style label.
pub fn relative_error(actual: f64, prediction: f64) -> Option<(f64, String)> {
    if actual == 0.0 {
        return None;
    }
    let rel = (prediction - actual) / actual;
    let pct = format!("{:.1}", rel.abs() * 100.0);
    let label = if pct == "0.0" {
        "matches actual".to_string()
    } else if rel < 0.0 {
        format!("{pct}% lower")
    } else {
        format!("{pct}% higher")
    };
    Some((rel, label))
}

/// A dataset with its fitted standardizer, encoded rows and the model being explained.
pub struct ExplainContext {
    pub id: String,
    pub dataset: Dataset,
    pub standardizer: Standardizer,
    pool: Vec<StandardizedVector>,
    predictor: Arc<dyn Predictor>,
}

impl std::fmt::Debug for ExplainContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExplainContext")
            .field("id", &self.id)
            .field("rows", &self.dataset.len())
            .field("predictor", &self.predictor.description())
            .finish()
    }
}

impl ExplainContext {
    pub fn new(id: impl Into<String>, dataset: Dataset, predictor: Arc<dyn Predictor>) -> Result<Self, ExplainError> {
        let standardizer = Standardizer::fit(&dataset)?;
        Self::with_standardizer(id, dataset, standardizer, predictor)
    }

    pub fn with_standardizer(
        id: impl Into<String>,
        dataset: Dataset,
        standardizer: Standardizer,
        predictor: Arc<dyn Predictor>,
    ) -> Result<Self, ExplainError> {
        if predictor.dim() != standardizer.dim() {
            return Err(PredictError::DimensionMismatch {
                expected: standardizer.dim(),
                got: predictor.dim(),
            }
            .into());
        }
        let pool = standardizer.standardize_dataset(&dataset)?;
        Ok(Self {
            id: id.into(),
            dataset,
            standardizer,
            pool,
            predictor,
        })
    }

    pub fn predictor(&self) -> &dyn Predictor {
        self.predictor.as_ref()
    }

    pub fn pool(&self) -> &[StandardizedVector] {
        &self.pool
    }

    /// Resolves a subject to an instance, its dataset row and its actual value.
    pub fn resolve(&self, subject: &SubjectRef) -> Result<(Instance, Option<usize>, Option<f64>), ExplainError> {
        match subject {
            SubjectRef::Id(id) => {
                let row = self.dataset.find(id).ok_or_else(|| ExplainError::UnknownSubject(id.clone()))?;
                let r = &self.dataset.rows[row];
                Ok((r.instance.clone(), Some(row), Some(r.actual)))
            }
            SubjectRef::Inline(inst) => {
                let checked = Instance::new(&self.dataset.schema, inst.values.clone(), inst.id.clone())?;
                Ok((checked, None, None))
            }
        }
    }

    /// Selects comparables for `subject`, excluding its own row.
    pub fn comparable_set(&self, subject: &Instance, row: Option<usize>, k: usize) -> Result<ComparableSet, ExplainError> {
        let encoded = self.standardizer.standardize(subject)?;
        Ok(select_from_pool(
            &self.dataset,
            &self.pool,
            self.standardizer.layout(),
            self.predictor.as_ref(),
            subject,
            encoded,
            k,
            row,
        )?)
    }

    fn traces_cached(
        &self,
        set: &ComparableSet,
        opts: &ExplainOptions,
        cache: Option<&TraceCache>,
    ) -> Result<Vec<Option<TraceFit>>, ExplainError> {
        let Some(cache) = cache else {
            return Ok(self.fit_traces(set, opts)?);
        };
        let config = serde_json::to_string(&DesiderataConfig {
            seed: 0,
            ..opts.desiderata.clone()
        })
        .expect("config serializes");
        let subject = serde_json::to_string(&set.subject.values).expect("values serialize");
        let keys: Vec<TraceKey> = set
            .comparables
            .iter()
            .map(|c| TraceKey {
                dataset: self.id.clone(),
                subject: subject.clone(),
                comparable: serde_json::to_string(&(c.row, &c.instance.values)).expect("values serialize"),
                config: config.clone(),
                seed: opts.seed,
            })
            .collect();
        let hits: Vec<Option<Arc<TraceFit>>> = keys.iter().map(|k| cache.get(k)).collect();
        if hits.iter().all(Option::is_some) {
            return Ok(hits.into_iter().map(|h| h.map(|f| (*f).clone())).collect());
        }
        let fits = self.fit_traces(set, opts)?;
        for (key, fit) in keys.into_iter().zip(&fits) {
            if let Some(fit) = fit {
                cache.insert(key, Arc::new(fit.clone()));
            }
        }
        Ok(fits)
    }

    fn fit_traces(&self, set: &ComparableSet, opts: &ExplainOptions) -> Result<Vec<Option<TraceFit>>, MethodError> {
        methods::traces(
            self.predictor.as_ref(),
            self.standardizer.layout(),
            set,
            self.standardizer.target_scale(),
            &opts.desiderata,
            opts.seed,
            false,
        )
    }

    pub fn explain(&self, subject: &SubjectRef, opts: &ExplainOptions) -> Result<Explanation, ExplainError> {
        self.explain_cached(subject, opts, None)
    }

    pub fn explain_cached(
        &self,
        subject: &SubjectRef,
        opts: &ExplainOptions,
        cache: Option<&TraceCache>,
    ) -> Result<Explanation, ExplainError> {
        if opts.k == 0 {
            return Err(ExplainError::InvalidRequest("k must be at least 1".into()));
        }
        opts.desiderata
            .validate()
            .map_err(|e| ExplainError::InvalidRequest(e.to_string()))?;
        let (instance, row, actual) = self.resolve(subject)?;
        let set = self.comparable_set(&instance, row, opts.k)?;
        let std = &self.standardizer;
        let p = self.predictor.as_ref();

        let mut artifacts = Artifacts::default();
        let mut adjusted: Option<Vec<f64>> = None;
        let detail = match opts.method {
            Method::ComparablesOnly => MethodDetail::Comparables,
            Method::LinearRegression => {
                let model = fit_regression(&set, ValueChannel::Actual);
                let factors = regression_factors(std, &model);
                MethodDetail::Regression { model, factors }
            }
            Method::LinearAdjustments => {
                artifacts.local = methods::local_models(p, std.layout(), &set, opts.sampling, opts.seed)?;
                let adjustments = set
                    .comparables
                    .iter()
                    .zip(&artifacts.local)
                    .map(|(c, m)| linear_adjust(m, c, &set.subject, &set.subject_encoded, std, ValueChannel::Actual))
                    .collect::<Result<Vec<_>, _>>()?;
                adjusted = Some(adjustments.iter().map(|a| a.adjusted_value).collect());
                MethodDetail::LinearAdjust {
                    adjustments,
                    local_models: artifacts.local.clone(),
                }
            }
            Method::TraceAdjustments => {
                artifacts.traces = self.traces_cached(&set, opts, cache)?;
                let mut steps = Vec::with_capacity(set.len());
                let mut docs = Vec::with_capacity(set.len());
                for (i, (c, fit)) in set.comparables.iter().zip(&artifacts.traces).enumerate() {
                    let fit = fit.as_ref().expect("traces are fit for every comparable");
                    steps.push(
                        extract_steps(&fit.model, c, &set.subject, std, opts.desiderata.delta, ValueChannel::Actual)
                            .map_err(MethodError::from)?,
                    );
                    let cfg = DesiderataConfig {
                        seed: methods::comparable_seed(opts.seed, &set, i),
                        ..opts.desiderata.clone()
                    };
                    docs.push(TraceDocument::new(fit.model.clone(), cfg, fit.loss.clone()));
                }
                adjusted = Some(steps.iter().map(|s| s.adjusted_value).collect());
                MethodDetail::Trace { steps, traces: docs }
            }
        };

        let estimate = methods::estimate(opts.method, &set, ValueChannel::Actual, &artifacts)?;
        let prediction_estimate = methods::estimate(opts.method, &set, ValueChannel::Prediction, &artifacts)?;
        let comparables = set
            .comparables
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let rel = relative_error(c.actual_value, c.ai_prediction);
                ComparableView {
                    row: c.row,
                    id: c.instance.id.clone(),
                    values: c.instance.values.clone(),
                    actual_value: c.actual_value,
                    ai_prediction: c.ai_prediction,
                    relative_error: rel.as_ref().map(|r| r.0),
                    error_label: rel.map(|r| r.1),
                    distance: set.distances[i],
                    similarity: set.similarities[i],
                    adjusted_value: adjusted.as_ref().map(|a| a[i]),
                }
            })
            .collect();
        let schema = &self.dataset.schema;
        Ok(Explanation {
            version: EXPLANATION_VERSION,
            dataset: self.id.clone(),
            provenance: self.dataset.provenance.clone(),
            method: opts.method,
            k: set.len(),
            seed: opts.seed,
            attributes: schema.attributes.clone(),
            target: TargetInfo {
                name: schema.target_name.clone(),
                unit: schema.target_unit.clone(),
            },
            subject: SubjectView {
                id: instance.id.clone(),
                values: instance.values.clone(),
                actual_value: actual,
                ai_prediction: set.subject_prediction,
            },
            comparables,
            estimate: EstimateView {
                point_estimate: estimate.point_estimate,
                bounds: estimate.bounds,
                approximate: true,
            },
            unfaithfulness: (prediction_estimate.point_estimate - set.subject_prediction).abs(),
            prediction_estimate,
            detail,
        })
    }
}

fn regression_factors(std: &Standardizer, model: &LinearModel) -> Vec<RegressionFactor> {
    let mut out = Vec::with_capacity(model.weights.len());
    for ((attr, block), enc) in std
        .schema()
        .attributes
        .iter()
        .zip(std.layout().blocks())
        .zip(std.encodings())
    {
        match enc {
            ColumnEncoding::ZScore { std: sd, .. } => {
                let w = model.weights[block.start];
                out.push(RegressionFactor {
                    attribute: attr.name.clone(),
                    level: None,
                    weight: w,
                    per_unit: Some(w / sd),
                });
            }
            ColumnEncoding::OneHot { levels } => {
                for (level, c) in levels.iter().zip(block.columns()) {
                    out.push(RegressionFactor {
                        attribute: attr.name.clone(),
                        level: Some(level.clone()),
                        weight: model.weights[c],
                        per_unit: None,
                    });
                }
            }
        }
    }
    out
}
