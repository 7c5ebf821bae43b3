//! Comparable selection, similarity weights and similarity-weighted reconciliation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictors::{PredictError, Predictor};
use crate::schema::{Dataset, FeatureLayout, Instance, SchemaError, Standardizer, StandardizedVector};

/// Floor added to distances before they are inverted into similarities.
pub const SIMILARITY_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ComparablesError {
    #[error("k = {k} is invalid for {available} candidate rows")]
    KTooLarge { k: usize, available: usize },
    #[error("no values to bound")]
    EmptyInput,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// The four explanation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "comparables")]
    ComparablesOnly,
    #[serde(rename = "regression")]
    LinearRegression,
    #[serde(rename = "linear-adjust")]
    LinearAdjustments,
    #[serde(rename = "trace")]
    TraceAdjustments,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::ComparablesOnly,
        Method::LinearRegression,
        Method::LinearAdjustments,
        Method::TraceAdjustments,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ComparablesOnly => "comparables",
            Method::LinearRegression => "regression",
            Method::LinearAdjustments => "linear-adjust",
            Method::TraceAdjustments => "trace",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown method `{0}` (expected one of: comparables, regression, linear-adjust, trace)")]
pub struct UnknownMethod(pub String);

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "comparables" | "comparables-only" => Ok(Method::ComparablesOnly),
            "regression" | "linear-regression" => Ok(Method::LinearRegression),
            "linear-adjust" | "linear-adjustments" => Ok(Method::LinearAdjustments),
            "trace" | "trace-adjust" | "trace-adjustments" => Ok(Method::TraceAdjustments),
            other => Err(UnknownMethod(other.to_string())),
        }
    }
}

/// Which per-comparable value an estimate is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValueChannel {
    /// Known outcomes `y_c`; what a user sees.
    #[default]
    Actual,
    /// Model outputs `ŷ_c`; used to measure faithfulness.
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparable {
    pub row: Option<usize>,
    pub instance: Instance,
    pub encoded: StandardizedVector,
    pub actual_value: f64,
    pub ai_prediction: f64,
}

impl Comparable {
    pub fn value(&self, channel: ValueChannel) -> f64 {
        match channel {
            ValueChannel::Actual => self.actual_value,
            ValueChannel::Prediction => self.ai_prediction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparableSet {
    pub subject: Instance,
    pub subject_encoded: StandardizedVector,
    pub subject_prediction: f64,
    pub comparables: Vec<Comparable>,
    pub distances: Vec<f64>,
    pub similarities: Vec<f64>,
}

/// Normalized inverse-distance similarities: `(1/(d+ε)) / Σ 1/(d_j+ε)`.
pub fn similarities(distances: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = distances.iter().map(|d| 1.0 / (d + SIMILARITY_EPS)).collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|v| v / total).collect()
}

impl ComparableSet {
    pub fn new(
        subject: Instance,
        subject_encoded: StandardizedVector,
        subject_prediction: f64,
        comparables: Vec<Comparable>,
        distances: Vec<f64>,
    ) -> Result<Self, ComparablesError> {
        if comparables.is_empty() || comparables.len() != distances.len() {
            return Err(ComparablesError::EmptyInput);
        }
        let similarities = similarities(&distances);
        Ok(Self {
            subject,
            subject_encoded,
            subject_prediction,
            comparables,
            distances,
            similarities,
        })
    }

    pub fn len(&self) -> usize {
        self.comparables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparables.is_empty()
    }

    /// The `k` nearest comparables of this set, similarities renormalized.
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.clamp(1, self.len());
        let distances = self.distances[..k].to_vec();
        Self {
            subject: self.subject.clone(),
            subject_encoded: self.subject_encoded.clone(),
            subject_prediction: self.subject_prediction,
            comparables: self.comparables[..k].to_vec(),
            similarities: similarities(&distances),
            distances,
        }
    }

    pub fn values(&self, channel: ValueChannel) -> Vec<f64> {
        self.comparables.iter().map(|c| c.value(channel)).collect()
    }

    pub fn mean_distance(&self) -> f64 {
        self.distances.iter().sum::<f64>() / self.distances.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconciledEstimate {
    pub method: Method,
    pub point_estimate: f64,
    pub bounds: Bounds,
}

/// `Σ ρ_c v_c / Σ ρ_c`
pub fn reconcile(values: &[f64], weights: &[f64]) -> f64 {
    let num: f64 = values.iter().zip(weights).map(|(v, w)| v * w).sum();
    let den: f64 = weights.iter().sum();
    num / den
}

pub fn uncertainty_bounds(values: &[f64]) -> Result<Bounds, ComparablesError> {
    if values.is_empty() {
        return Err(ComparablesError::EmptyInput);
    }
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    let high = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Bounds { low, high })
}

/// Reconciles per-comparable values with the set's similarities.
pub fn reconciled(method: Method, values: &[f64], similarities: &[f64]) -> ReconciledEstimate {
    ReconciledEstimate {
        method,
        point_estimate: reconcile(values, similarities),
        // callers always pass at least one value
        bounds: uncertainty_bounds(values).expect("nonempty comparable set"),
    }
}

/// Comparables-only explanation: similarity-weighted average of the chosen channel.
pub fn weighted_average(set: &ComparableSet, channel: ValueChannel) -> ReconciledEstimate {
    reconciled(Method::ComparablesOnly, &set.values(channel), &set.similarities)
}

/// Indices and distances of the `k` pool rows nearest to `subject`, ties in pool order.
pub fn nearest(
    layout: &FeatureLayout,
    pool: &[StandardizedVector],
    subject: &[f64],
    k: usize,
    exclude: Option<usize>,
) -> Result<Vec<(usize, f64)>, ComparablesError> {
    let mut order: Vec<(usize, f64)> = pool
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, x)| (i, layout.distance(subject, x)))
        .collect();
    if k == 0 || k > order.len() {
        return Err(ComparablesError::KTooLarge {
            k,
            available: order.len(),
        });
    }
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    order.truncate(k);
    Ok(order)
}

/// Picks the `k` rows nearest to `subject` in standardized Manhattan distance.
///
/// `exclude` removes the subject's own row when it is part of the dataset.
pub fn select_comparables(
    dataset: &Dataset,
    std: &Standardizer,
    predictor: &dyn Predictor,
    subject: &Instance,
    k: usize,
    exclude: Option<usize>,
) -> Result<ComparableSet, ComparablesError> {
    let pool = std.standardize_dataset(dataset)?;
    let subject_encoded = std.standardize(subject)?;
    select_from_pool(dataset, &pool, std.layout(), predictor, subject, subject_encoded, k, exclude)
}

/// As [`select_comparables`] with a pre-standardized pool.
#[allow(clippy::too_many_arguments)]
pub fn select_from_pool(
    dataset: &Dataset,
    pool: &[StandardizedVector],
    layout: &FeatureLayout,
    predictor: &dyn Predictor,
    subject: &Instance,
    subject_encoded: StandardizedVector,
    k: usize,
    exclude: Option<usize>,
) -> Result<ComparableSet, ComparablesError> {
    let chosen = nearest(layout, pool, &subject_encoded, k, exclude)?;
    let mut batch: Vec<StandardizedVector> = chosen.iter().map(|&(i, _)| pool[i].clone()).collect();
    batch.push(subject_encoded.clone());
    let preds = predictor.predict(&batch)?;
    let comparables = chosen
        .iter()
        .zip(&preds)
        .map(|(&(i, _), &p)| Comparable {
            row: Some(i),
            instance: dataset.rows[i].instance.clone(),
            encoded: pool[i].clone(),
            actual_value: dataset.rows[i].actual,
            ai_prediction: p,
        })
        .collect();
    let distances = chosen.iter().map(|&(_, d)| d).collect();
    ComparableSet::new(subject.clone(), subject_encoded, preds[preds.len() - 1], comparables, distances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::SyntheticPredictor;
    use crate::schema::{AttributeDef, AttributeSchema, Row, Value};

    #[test]
    fn house_fixture_reconciles_to_659_4k() {
        let est = reconcile(&[600_000.0, 710_000.0], &[0.46, 0.54]);
        assert!((est - 659_400.0).abs() < 1.0, "{est}");
    }

    #[test]
    fn singleton_and_uniform() {
        assert_eq!(reconcile(&[42.0], &[1.0]), 42.0);
        assert!((reconcile(&[100.0, 200.0, 300.0], &[1.0, 1.0, 1.0]) - 200.0).abs() < 1e-12);
    }

    #[test]
    fn bounds() {
        let b = uncertainty_bounds(&[600_000.0, 710_000.0]).unwrap();
        assert_eq!((b.low, b.high), (600_000.0, 710_000.0));
        let b = uncertainty_bounds(&[5.0]).unwrap();
        assert_eq!((b.low, b.high), (5.0, 5.0));
        let b = uncertainty_bounds(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((b.low, b.high), (1.0, 3.0));
        assert!(matches!(uncertainty_bounds(&[]), Err(ComparablesError::EmptyInput)));
    }

    #[test]
    fn similarity_shapes() {
        assert_eq!(similarities(&[3.0]), vec![1.0]);
        let s = similarities(&[2.0, 2.0]);
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
        assert_eq!("comparables-only".parse::<Method>().unwrap(), Method::ComparablesOnly);
        assert!("lime".parse::<Method>().is_err());
    }

    fn five_point() -> (Dataset, Standardizer) {
        let schema = AttributeSchema::new(vec![AttributeDef::numeric("x", ""), AttributeDef::numeric("z", "")], "y", "").unwrap();
        let pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 3.0), (4.0, 4.0), (-2.0, 1.0)];
        let rows = pts
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| Row {
                instance: Instance::new(&schema, vec![Value::Number(a), Value::Number(b)], Some(i.to_string())).unwrap(),
                actual: i as f64 * 10.0,
            })
            .collect();
        let ds = Dataset::new(schema, rows, "five").unwrap();
        let st = Standardizer::fit(&ds).unwrap();
        (ds, st)
    }

    #[test]
    fn five_point_selection_matches_hand_ranking() {
        let (ds, st) = five_point();
        let std_x = [0.0_f64, 1.0, 0.0, 4.0, -2.0];
        let std_z = [0.0_f64, 0.0, 3.0, 4.0, 1.0];
        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / 5.0;
            (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 5.0).sqrt()
        };
        let (sx, sz) = (sd(&std_x), sd(&std_z));
        // subject at (0.5, 0.5): hand distances in standardized units
        let subject = Instance::new(&ds.schema, vec![Value::Number(0.5), Value::Number(0.5)], None).unwrap();
        let hand: Vec<f64> = std_x
            .iter()
            .zip(&std_z)
            .map(|(x, z)| (x - 0.5).abs() / sx + (z - 0.5).abs() / sz)
            .collect();
        let mut ranked: Vec<usize> = (0..5).collect();
        ranked.sort_by(|&a, &b| hand[a].total_cmp(&hand[b]));
        let p = SyntheticPredictor::linear(vec![1.0, 1.0], 0.0);
        let set = select_comparables(&ds, &st, &p, &subject, 3, None).unwrap();
        let rows: Vec<usize> = set.comparables.iter().map(|c| c.row.unwrap()).collect();
        assert_eq!(rows, ranked[..3].to_vec());
        for (d, &r) in set.distances.iter().zip(&rows) {
            assert!((d - hand[r]).abs() < 1e-12);
        }
        assert!((set.similarities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn selection_errors_and_exclusion() {
        let (ds, st) = five_point();
        let p = SyntheticPredictor::linear(vec![1.0, 1.0], 0.0);
        let subject = ds.rows[0].instance.clone();
        assert!(matches!(
            select_comparables(&ds, &st, &p, &subject, 5, Some(0)),
            Err(ComparablesError::KTooLarge { k: 5, available: 4 })
        ));
        let set = select_comparables(&ds, &st, &p, &subject, 1, Some(0)).unwrap();
        assert_ne!(set.comparables[0].row, Some(0));
        assert_eq!(set.similarities, vec![1.0]);
    }

    #[test]
    fn prefix_renormalizes() {
        let (ds, st) = five_point();
        let p = SyntheticPredictor::linear(vec![1.0, 1.0], 0.0);
        let subject = Instance::new(&ds.schema, vec![Value::Number(0.2), Value::Number(0.9)], None).unwrap();
        let set = select_comparables(&ds, &st, &p, &subject, 4, None).unwrap();
        let two = set.prefix(2);
        let direct = select_comparables(&ds, &st, &p, &subject, 2, None).unwrap();
        assert_eq!(two, direct);
    }
}
