//! HTTP API behind the comparison grid: dataset and subject browsing,
//! explanations of every method, and scoring of decision sessions.
//!
//! Every response carries an `X-CXAI-Version` header; every error has the
//! body `{"error", "code", "detail"}`.

mod error;
mod sessions;

pub use error::{ApiError, ErrorBody};
pub use sessions::{CaseResult, CaseSpec, ScoredResponse, SessionMode, SessionRecord, SessionStore, Verdict, TOO_WIDE_FRACTION};

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::HeaderValue;
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use cxai_core::baselines::LocalSampling;
use cxai_core::comparables::Method;
use cxai_core::explain::{ExplainContext, ExplainOptions, Explanation, SubjectRef, TraceCache};
use cxai_core::schema::{AttributeDef, Value};
use cxai_core::trace::DesiderataConfig;
use serde::{Deserialize, Serialize};

pub const API_VERSION: &str = "1";
pub const VERSION_HEADER: &str = "x-cxai-version";

/// Shared, immutable datasets plus the trace cache and session store.
pub struct AppState {
    datasets: BTreeMap<String, Arc<ExplainContext>>,
    cache: TraceCache,
    sessions: SessionStore,
}

impl AppState {
    pub fn new(contexts: Vec<ExplainContext>, sessions: SessionStore) -> Self {
        Self {
            datasets: contexts.into_iter().map(|c| (c.id.clone(), Arc::new(c))).collect(),
            cache: TraceCache::new(),
            sessions,
        }
    }

    fn dataset(&self, id: &str) -> Result<&Arc<ExplainContext>, ApiError> {
        self.datasets.get(id).ok_or_else(|| ApiError::UnknownDataset(id.to_string()))
    }

    pub fn cached_traces(&self) -> usize {
        self.cache.len()
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TargetView {
    pub name: String,
    pub unit: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub id: String,
    pub provenance: String,
    pub rows: usize,
    pub attributes: Vec<AttributeDef>,
    pub target: TargetView,
    pub predictor: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubjectSummary {
    pub id: String,
    pub row: usize,
    pub values: Vec<Value>,
    pub actual_value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubjectListing {
    pub dataset: String,
    pub count: usize,
    pub subjects: Vec<SubjectSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplainRequest {
    pub dataset: String,
    pub subject: String,
    pub method: String,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// Desiderata overrides; missing fields keep their defaults.
    #[serde(default)]
    pub config: Option<DesiderataConfig>,
    #[serde(default)]
    pub sampling: Option<LocalSampling>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSession {
    pub mode: SessionMode,
    pub cases: Vec<CaseSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub case: usize,
    pub y_min: f64,
    pub y_max: f64,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::BadRequest(e.body_text()))
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into() })
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> Json<Vec<DatasetSummary>> {
    Json(
        state
            .datasets
            .values()
            .map(|c| DatasetSummary {
                id: c.id.clone(),
                provenance: c.dataset.provenance.clone(),
                rows: c.dataset.len(),
                attributes: c.dataset.schema.attributes.clone(),
                target: TargetView {
                    name: c.dataset.schema.target_name.clone(),
                    unit: c.dataset.schema.target_unit.clone(),
                },
                predictor: c.predictor().description(),
            })
            .collect(),
    )
}

async fn list_subjects(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SubjectListing>, ApiError> {
    let ctx = state.dataset(&id)?;
    let subjects: Vec<SubjectSummary> = ctx
        .dataset
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| SubjectSummary {
            id: r.instance.id.clone().unwrap_or_else(|| i.to_string()),
            row: i,
            values: r.instance.values.clone(),
            actual_value: r.actual,
        })
        .collect();
    Ok(Json(SubjectListing {
        dataset: id,
        count: subjects.len(),
        subjects,
    }))
}

async fn explain(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<ExplainRequest>, JsonRejection>,
) -> Result<Json<Explanation>, ApiError> {
    let req = body(payload)?;
    let method: Method = req.method.parse().map_err(|e: cxai_core::comparables::UnknownMethod| ApiError::BadRequest(e.to_string()))?;
    if req.k == 0 {
        return Err(ApiError::BadRequest("k must be at least 1".into()));
    }
    let ctx = state.dataset(&req.dataset)?.clone();
    let opts = ExplainOptions {
        method,
        k: req.k,
        seed: req.seed,
        desiderata: req.config.unwrap_or_default(),
        sampling: req.sampling.unwrap_or_default(),
    };
    let subject = SubjectRef::Id(req.subject);
    let shared = state.clone();
    let doc = tokio::task::spawn_blocking(move || ctx.explain_cached(&subject, &opts, Some(&shared.cache)))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(doc))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Json<SessionRecord>, ApiError> {
    let req = body(payload)?;
    for (i, case) in req.cases.iter().enumerate() {
        let ctx = state.dataset(&case.dataset)?;
        if ctx.dataset.find(&case.subject).is_none() {
            return Err(ApiError::BadRequest(format!("case {i}: unknown subject `{}`", case.subject)));
        }
        case.method
            .parse::<Method>()
            .map_err(|e| ApiError::BadRequest(format!("case {i}: {e}")))?;
        if case.k == 0 {
            return Err(ApiError::BadRequest(format!("case {i}: k must be at least 1")));
        }
    }
    Ok(Json(state.sessions.create(req.mode, req.cases)?))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionRecord>, ApiError> {
    Ok(Json(state.sessions.get(&id)?))
}

async fn submit_response(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    payload: Result<Json<SubmitResponse>, JsonRejection>,
) -> Result<Json<ScoredResponse>, ApiError> {
    let req = body(payload)?;
    let scored = state.sessions.respond(&id, req.case, req.y_min, req.y_max, |case| {
        let ctx = state.dataset(&case.dataset)?;
        let row = ctx
            .dataset
            .find(&case.subject)
            .ok_or_else(|| ApiError::BadRequest(format!("unknown subject `{}`", case.subject)))?;
        Ok(ctx.dataset.rows[row].actual)
    })?;
    Ok(Json(scored))
}

async fn version_header(mut resp: Response) -> Response {
    resp.headers_mut().insert(VERSION_HEADER, HeaderValue::from_static(API_VERSION));
    resp
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/datasets", get(list_datasets))
        .route("/datasets/{id}/subjects", get(list_subjects))
        .route("/explain", post(explain))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/responses", post(submit_response))
        .layer(axum::middleware::map_response(version_header))
        .with_state(state)
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, datasets = state.datasets.len(), "listening");
    }
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}
