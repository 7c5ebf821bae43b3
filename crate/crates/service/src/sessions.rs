//! Decision sessions: an ordered list of cases a participant answers with
//! credible intervals. Every scored response is appended to a JSON-lines log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use cxai_core::evaluation::{decision_metrics, DecisionMetrics, DecisionResponse};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

/// Intervals wider than this fraction of the actual value are flagged (±10%).
pub const TOO_WIDE_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    /// Actual values and verdicts are returned after each response.
    Practice,
    /// Responses are scored silently.
    Main,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub dataset: String,
    pub subject: String,
    pub method: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub subject: String,
    pub method: String,
    pub k: usize,
    pub response: DecisionResponse,
    pub metrics: DecisionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub mode: SessionMode,
    pub cases: Vec<CaseSpec>,
    pub results: Vec<CaseResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Within,
    Outside,
}

/// Response to a submitted interval. Practice sessions also reveal the answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredResponse {
    pub session_id: String,
    pub case: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub y_mean: f64,
    pub metrics: DecisionMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub too_wide: Option<bool>,
}

#[derive(Debug, Default)]
struct Inner {
    next_id: u64,
    sessions: HashMap<String, SessionRecord>,
}

#[derive(Debug, Default)]
pub struct SessionStore {
    inner: Mutex<Inner>,
    log: Option<Mutex<File>>,
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_log(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            inner: Mutex::default(),
            log: Some(Mutex::new(file)),
        })
    }

    fn append(&self, line: &serde_json::Value) -> Result<(), ApiError> {
        let Some(log) = &self.log else {
            return Ok(());
        };
        let mut f = log.lock().map_err(|_| ApiError::Internal("session log poisoned".into()))?;
        writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| ApiError::Internal(e.to_string()))
    }

    pub fn create(&self, mode: SessionMode, cases: Vec<CaseSpec>) -> Result<SessionRecord, ApiError> {
        let mut inner = self.inner.lock().map_err(|_| ApiError::Internal("session store poisoned".into()))?;
        inner.next_id += 1;
        let record = SessionRecord {
            session_id: format!("s{}", inner.next_id),
            mode,
            cases,
            results: Vec::new(),
        };
        self.append(&serde_json::json!({"event": "created", "session": &record}))?;
        inner.sessions.insert(record.session_id.clone(), record.clone());
        Ok(record)
    }

    pub fn get(&self, id: &str) -> Result<SessionRecord, ApiError> {
        let inner = self.inner.lock().map_err(|_| ApiError::Internal("session store poisoned".into()))?;
        inner
            .sessions
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    /// Scores and appends a response. `actual_of` resolves the case's actual value.
    pub fn respond(
        &self,
        id: &str,
        case: usize,
        y_min: f64,
        y_max: f64,
        actual_of: impl FnOnce(&CaseSpec) -> Result<f64, ApiError>,
    ) -> Result<ScoredResponse, ApiError> {
        let mut inner = self.inner.lock().map_err(|_| ApiError::Internal("session store poisoned".into()))?;
        let session = inner
            .sessions
            .get_mut(id)
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))?;
        let spec = session.cases.get(case).ok_or(ApiError::UnknownCase(case))?.clone();
        let actual = actual_of(&spec)?;
        let response = DecisionResponse::new(y_min, y_max, actual)?;
        let metrics = decision_metrics(&response)?;
        let result = CaseResult {
            case,
            subject: spec.subject.clone(),
            method: spec.method.clone(),
            k: spec.k,
            response,
            metrics,
        };
        self.append(&serde_json::json!({"event": "response", "session_id": id, "result": &result}))?;
        session.results.push(result);
        let practice = session.mode == SessionMode::Practice;
        Ok(ScoredResponse {
            session_id: id.to_string(),
            case,
            y_min,
            y_max,
            y_mean: response.y_mean(),
            metrics,
            actual_value: practice.then_some(actual),
            verdict: practice.then(|| if response.contains_actual() { Verdict::Within } else { Verdict::Outside }),
            too_wide: practice.then(|| response.width() > TOO_WIDE_FRACTION * actual.abs()),
        })
    }
}
