use serde::{Deserialize, Serialize};

use super::{check_batch, ensure_finite, PredictError, Predictor};
use crate::schema::StandardizedVector;

/// Closed-form test models over encoded attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticPredictor {
    /// `w·x + b`
    Linear { weights: Vec<f64>, bias: f64 },
    /// `Σ a_r x_r² + w·x + b`
    Quadratic {
        curvature: Vec<f64>,
        weights: Vec<f64>,
        bias: f64,
    },
    /// `Σ (amp_r sin(freq_r x_r + phase_r) + slope_r x_r) + b`
    SinusoidPlusLinear {
        amplitude: Vec<f64>,
        frequency: Vec<f64>,
        phase: Vec<f64>,
        slope: Vec<f64>,
        bias: f64,
    },
    /// `Σ h_r · stairs(x_r) + b`, with smoothed steps of width `step`.
    Plateau {
        heights: Vec<f64>,
        step: f64,
        sharpness: f64,
        bias: f64,
    },
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smoothed staircase: flat near the middle of each step, rising across step edges.
fn stairs(u: f64, step: f64, a: f64) -> (f64, f64) {
    let t = u / step;
    let k = t.floor();
    let phi = t - k;
    let lo = sigmoid(-a / 2.0);
    let span = sigmoid(a / 2.0) - lo;
    let s = sigmoid(a * (phi - 0.5));
    let value = step * (k + (s - lo) / span);
    let slope = a * s * (1.0 - s) / span;
    (value, slope)
}

impl SyntheticPredictor {
    pub fn linear(weights: Vec<f64>, bias: f64) -> Self {
        Self::Linear { weights, bias }
    }

    pub fn quadratic(curvature: Vec<f64>, bias: f64) -> Self {
        let weights = vec![0.0; curvature.len()];
        Self::Quadratic { curvature, weights, bias }
    }

    pub fn sinusoid_plus_linear(amplitude: Vec<f64>, frequency: Vec<f64>, slope: Vec<f64>, bias: f64) -> Self {
        let phase = vec![0.0; amplitude.len()];
        Self::SinusoidPlusLinear {
            amplitude,
            frequency,
            phase,
            slope,
            bias,
        }
    }

    fn value_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self {
            Self::Linear { weights, bias } => (dot(weights, x) + bias, weights.clone()),
            Self::Quadratic { curvature, weights, bias } => {
                let mut y = *bias;
                let mut g = Vec::with_capacity(x.len());
                for ((&a, &w), &xi) in curvature.iter().zip(weights).zip(x) {
                    y += a * xi * xi + w * xi;
                    g.push(2.0 * a * xi + w);
                }
                (y, g)
            }
            Self::SinusoidPlusLinear {
                amplitude,
                frequency,
                phase,
                slope,
                bias,
            } => {
                let mut y = *bias;
                let mut g = Vec::with_capacity(x.len());
                for r in 0..x.len() {
                    let arg = frequency[r] * x[r] + phase[r];
                    y += amplitude[r] * arg.sin() + slope[r] * x[r];
                    g.push(amplitude[r] * frequency[r] * arg.cos() + slope[r]);
                }
                (y, g)
            }
            Self::Plateau {
                heights,
                step,
                sharpness,
                bias,
            } => {
                let mut y = *bias;
                let mut g = Vec::with_capacity(x.len());
                for (&h, &xi) in heights.iter().zip(x) {
                    let (v, s) = stairs(xi, *step, *sharpness);
                    y += h * v;
                    g.push(h * s);
                }
                (y, g)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Predictor for SyntheticPredictor {
    fn dim(&self) -> usize {
        match self {
            Self::Linear { weights, .. } => weights.len(),
            Self::Quadratic { curvature, .. } => curvature.len(),
            Self::SinusoidPlusLinear { amplitude, .. } => amplitude.len(),
            Self::Plateau { heights, .. } => heights.len(),
        }
    }

    fn predict(&self, xs: &[StandardizedVector]) -> Result<Vec<f64>, PredictError> {
        check_batch(self.dim(), xs)?;
        ensure_finite(xs.iter().map(|x| self.value_and_grad(x).0).collect())
    }

    fn gradients(&self, xs: &[StandardizedVector]) -> Result<Option<Vec<Vec<f64>>>, PredictError> {
        check_batch(self.dim(), xs)?;
        Ok(Some(xs.iter().map(|x| self.value_and_grad(x).1).collect()))
    }

    fn description(&self) -> String {
        let name = match self {
            Self::Linear { .. } => "linear",
            Self::Quadratic { .. } => "quadratic",
            Self::SinusoidPlusLinear { .. } => "sinusoid_plus_linear",
            Self::Plateau { .. } => "plateau",
        };
        format!("synthetic {name} ({} dims)", self.dim())
    }
}
