use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::explain::ExplainContext;
use crate::predictors::{Predictor, SyntheticPredictor};
use crate::schema::{AttributeDef, AttributeSchema, Dataset, Instance, Row, Standardizer, Value};

fn default_noise() -> f64 {
    0.1
}

/// A closed-form model with a sampled dataset whose actual values are the
/// model's output plus Gaussian observation noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub function: SyntheticPredictor,
    pub n_rows: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticTask {
    pub fn new(function: SyntheticPredictor, n_rows: usize, seed: u64) -> Self {
        Self {
            function,
            n_rows,
            noise_std: default_noise(),
            seed,
        }
    }

    /// Raw attributes `x1..xd` are drawn from N(0, 1). The model reads their
    /// standardized encoding, so the dataset's own statistics define its inputs.
    pub fn build(&self) -> Result<ExplainContext, EvalError> {
        let d = self.function.dim();
        if d == 0 || self.n_rows < 2 {
            return Err(EvalError::InvalidSpec("synthetic task needs at least one attribute and two rows".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(EvalError::InvalidSpec("noise std must be finite and nonnegative".into()));
        }
        let schema = AttributeSchema::new(
            (1..=d).map(|i| AttributeDef::numeric(format!("x{i}"), "")).collect(),
            "y",
            "",
        )
        .map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rows: Vec<Row> = (0..self.n_rows)
            .map(|i| Row {
                instance: Instance {
                    values: (0..d).map(|_| Value::Number(unit.sample(&mut rng))).collect(),
                    id: Some(i.to_string()),
                },
                actual: 0.0,
            })
            .collect();
        let provenance = format!("synthetic:{}:seed={}", self.function_name(), self.seed);
        let placeholder = Dataset::new(schema.clone(), rows.clone(), provenance.clone())?;
        let features = Standardizer::fit(&placeholder)?;
        let encoded = features.standardize_dataset(&placeholder)?;
        let clean = self
            .function
            .predict(&encoded)
            ?;
        let noise = Normal::new(0.0, self.noise_std.max(f64::MIN_POSITIVE)).expect("valid noise std");
        for (row, y) in rows.iter_mut().zip(clean) {
            row.actual = if self.noise_std > 0.0 { y + noise.sample(&mut rng) } else { y };
        }
        let dataset = Dataset::new(schema, rows, provenance)?;
        Ok(ExplainContext::new("synthetic", dataset, Arc::new(self.function.clone()))?)
    }

    fn function_name(&self) -> &'static str {
        match self.function {
            SyntheticPredictor::Linear { .. } => "linear",
            SyntheticPredictor::Quadratic { .. } => "quadratic",
            SyntheticPredictor::SinusoidPlusLinear { .. } => "sinusoid_plus_linear",
            SyntheticPredictor::Plateau { .. } => "plateau",
        }
    }
}
