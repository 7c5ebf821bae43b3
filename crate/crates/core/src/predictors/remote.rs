use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_batch, ensure_finite, PredictError, Predictor};
use crate::schema::StandardizedVector;

/// Environment variable naming the default remote predictor endpoint.
pub const PREDICTOR_URL_ENV: &str = "COMPARABLES_PREDICTOR_URL";

#[derive(Serialize)]
struct PredictRequest<'a> {
    inputs: &'a [StandardizedVector],
}

#[derive(Deserialize)]
struct PredictResponse {
    predictions: Vec<f64>,
}

/// Client for a model served over HTTP.
///
/// Wire contract: `POST {"inputs": [[...], ...]}` answered by
/// `{"predictions": [...]}`. Transport failures and 5xx statuses are retried
/// up to the retry budget; any response that parses is final.
#[derive(Debug, Clone)]
pub struct RemotePredictor {
    url: String,
    dim: usize,
    retries: u32,
    agent: ureq::Agent,
}

impl RemotePredictor {
    pub fn new(url: impl Into<String>, dim: usize, timeout: Duration, retries: u32) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            url: url.into(),
            dim,
            retries,
            agent: ureq::Agent::new_with_config(config),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, xs: &[StandardizedVector]) -> Result<Result<Vec<f64>, PredictError>, String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(PredictRequest { inputs: xs })
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(format!("status {status}"));
        }
        if !status.is_success() {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            return Ok(Err(PredictError::BadResponse(format!("status {status}: {body}"))));
        }
        match resp.body_mut().read_json::<PredictResponse>() {
            Ok(parsed) if parsed.predictions.len() == xs.len() => Ok(ensure_finite(parsed.predictions)),
            Ok(parsed) => Ok(Err(PredictError::BadResponse(format!(
                "expected {} predictions, got {}",
                xs.len(),
                parsed.predictions.len()
            )))),
            Err(e) => Ok(Err(PredictError::BadResponse(e.to_string()))),
        }
    }
}

impl Predictor for RemotePredictor {
    fn dim(&self) -> usize {
        self.dim
    }

    fn predict(&self, xs: &[StandardizedVector]) -> Result<Vec<f64>, PredictError> {
        check_batch(self.dim, xs)?;
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let mut last = String::new();
        for _ in 0..=self.retries {
            match self.attempt(xs) {
                Ok(result) => return result,
                Err(detail) => last = detail,
            }
        }
        Err(PredictError::RemoteUnavailable {
            attempts: self.retries + 1,
            detail: last,
        })
    }

    fn description(&self) -> String {
        format!("remote predictor at {}", self.url)
    }
}
