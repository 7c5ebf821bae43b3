use super::{check_batch, PredictError, Predictor};
use crate::schema::{Dataset, FeatureLayout, Standardizer, StandardizedVector};

/// Floor added to distances before inverting them into weights.
pub const INVERSE_DISTANCE_EPS: f64 = 1e-6;

/// Inverse-distance-weighted k-nearest-neighbour regressor in the encoded space.
#[derive(Debug, Clone)]
pub struct KnnRegressor {
    layout: FeatureLayout,
    points: Vec<StandardizedVector>,
    targets: Vec<f64>,
    k: usize,
}

impl KnnRegressor {
    pub fn new(
        layout: FeatureLayout,
        points: Vec<StandardizedVector>,
        targets: Vec<f64>,
        k: usize,
    ) -> Result<Self, PredictError> {
        if k == 0 || k > points.len() {
            return Err(PredictError::KTooLarge {
                k,
                available: points.len(),
            });
        }
        check_batch(layout.dim(), &points)?;
        Ok(Self {
            layout,
            points,
            targets,
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn predict_point(&self, x: &[f64]) -> f64 {
        let mut order: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (self.layout.distance(x, p), i))
            .collect();
        // stable: equal distances keep dataset order
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut num = 0.0;
        let mut den = 0.0;
        for &(d, i) in &order[..self.k] {
            let w = 1.0 / (d + INVERSE_DISTANCE_EPS);
            num += w * self.targets[i];
            den += w;
        }
        num / den
    }
}

impl Predictor for KnnRegressor {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn predict(&self, xs: &[StandardizedVector]) -> Result<Vec<f64>, PredictError> {
        check_batch(self.dim(), xs)?;
        Ok(xs.iter().map(|x| self.predict_point(x)).collect())
    }

    fn description(&self) -> String {
        format!("knn regressor (k = {}, {} rows)", self.k, self.points.len())
    }
}

/// Fits a k-NN regressor on the standardized dataset.
pub fn fit_knn(dataset: &Dataset, std: &Standardizer, k: usize) -> Result<KnnRegressor, PredictError> {
    let points = std
        .standardize_dataset(dataset)
        .map_err(|e| PredictError::Input(e.to_string()))?;
    let targets = dataset.rows.iter().map(|r| r.actual).collect();
    KnnRegressor::new(std.layout().clone(), points, targets, k)
}
