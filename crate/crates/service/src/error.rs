use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cxai_core::evaluation::DecisionError;
use cxai_core::explain::ExplainError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown case {0}")]
    UnknownCase(usize),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error("internal error: {0}")]
    Internal(String),
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: String,
    pub code: &'static str,
    pub detail: String,
}

impl ApiError {
    pub fn status_and_code(&self) -> (StatusCode, &'static str) {
        match self {
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::UnknownDataset(_) => (StatusCode::NOT_FOUND, "unknown_dataset"),
            ApiError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ApiError::UnknownCase(_) => (StatusCode::NOT_FOUND, "unknown_case"),
            ApiError::Explain(e) => match e {
                ExplainError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
                ExplainError::UnknownSubject(_) => (StatusCode::NOT_FOUND, "unknown_subject"),
                ExplainError::NoDifference => (StatusCode::BAD_REQUEST, "no_difference"),
                ExplainError::Schema(_) => (StatusCode::BAD_REQUEST, "invalid_subject"),
                ExplainError::Predict(_) => (StatusCode::BAD_GATEWAY, "predictor_failure"),
                ExplainError::Ingest(_) | ExplainError::Trace(_) | ExplainError::Baseline(_) => {
                    (StatusCode::INTERNAL_SERVER_ERROR, "explanation_failed")
                }
            },
            ApiError::Decision(e) => match e {
                DecisionError::InvertedInterval { .. } => (StatusCode::BAD_REQUEST, "inverted_interval"),
                DecisionError::ZeroWidthInterval => (StatusCode::BAD_REQUEST, "zero_width_interval"),
                DecisionError::NonFinite => (StatusCode::BAD_REQUEST, "non_finite"),
            },
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = self.status_and_code();
        let error = status.canonical_reason().unwrap_or("error").to_string();
        if status.is_server_error() {
            tracing::error!(code, "{self}");
        }
        (
            status,
            Json(ErrorBody {
                error,
                code,
                detail: self.to_string(),
            }),
        )
            .into_response()
    }
}
