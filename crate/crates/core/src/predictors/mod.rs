//! The black-box model being explained.
//!
//! Every explanation method talks to the model only through [`Predictor`]:
//! batches of encoded vectors in, one real prediction per vector out.

mod knn;
mod remote;
mod synthetic;

pub use knn::{fit_knn, KnnRegressor};
pub use remote::{RemotePredictor, PREDICTOR_URL_ENV};
pub use synthetic::SyntheticPredictor;

use thiserror::Error;

use crate::schema::StandardizedVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("expected {expected}-dimensional input, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k = {k} exceeds the {available} available rows")]
    KTooLarge { k: usize, available: usize },
    #[error("remote predictor unavailable after {attempts} attempt(s): {detail}")]
    RemoteUnavailable { attempts: u32, detail: String },
    #[error("remote predictor returned an invalid response: {0}")]
    BadResponse(String),
    #[error("invalid predictor input: {0}")]
    Input(String),
    #[error("predictor produced a non-finite output")]
    NonFinite,
}

pub trait Predictor: Send + Sync {
    /// Encoded input dimension.
    fn dim(&self) -> usize;

    fn predict(&self, xs: &[StandardizedVector]) -> Result<Vec<f64>, PredictError>;

    /// Input gradients, when the model can provide them analytically.
    fn gradients(&self, _xs: &[StandardizedVector]) -> Result<Option<Vec<Vec<f64>>>, PredictError> {
        Ok(None)
    }

    fn description(&self) -> String;
}

impl<P: Predictor + ?Sized> Predictor for std::sync::Arc<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn predict(&self, xs: &[StandardizedVector]) -> Result<Vec<f64>, PredictError> {
        (**self).predict(xs)
    }

    fn gradients(&self, xs: &[StandardizedVector]) -> Result<Option<Vec<Vec<f64>>>, PredictError> {
        (**self).gradients(xs)
    }

    fn description(&self) -> String {
        (**self).description()
    }
}

pub fn predict_one(p: &dyn Predictor, x: &[f64]) -> Result<f64, PredictError> {
    Ok(p.predict(&[x.to_vec()])?[0])
}

pub(crate) fn check_batch(dim: usize, xs: &[StandardizedVector]) -> Result<(), PredictError> {
    match xs.iter().find(|x| x.len() != dim) {
        Some(bad) => Err(PredictError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        }),
        None => Ok(()),
    }
}

/// Gradients from the predictor if it has them, otherwise batched central differences.
pub fn gradients_or_fd(p: &dyn Predictor, xs: &[StandardizedVector], h: f64) -> Result<Vec<Vec<f64>>, PredictError> {
    if let Some(g) = p.gradients(xs)? {
        return Ok(g);
    }
    let dim = p.dim();
    let mut probes = Vec::with_capacity(xs.len() * dim * 2);
    for x in xs {
        for j in 0..dim {
            let mut hi = x.clone();
            hi[j] += h;
            let mut lo = x.clone();
            lo[j] -= h;
            probes.push(hi);
            probes.push(lo);
        }
    }
    let ys = p.predict(&probes)?;
    Ok(ys
        .chunks(2 * dim)
        .map(|c| c.chunks(2).map(|pair| (pair[0] - pair[1]) / (2.0 * h)).collect())
        .collect())
}

pub(crate) fn ensure_finite(ys: Vec<f64>) -> Result<Vec<f64>, PredictError> {
    if ys.iter().all(|y| y.is_finite()) {
        Ok(ys)
    } else {
        Err(PredictError::NonFinite)
    }
}
