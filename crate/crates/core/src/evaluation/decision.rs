use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Floor applied before taking logarithms of errors and widths.
pub const LOG_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("credible interval has zero width")]
    ZeroWidthInterval,
    #[error("credible interval is inverted: min {min} > max {max}")]
    InvertedInterval { min: f64, max: f64 },
    #[error("non-finite decision input")]
    NonFinite,
}

/// A user's 90% credible interval for a subject, and the subject's actual value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub y_min: f64,
    pub y_max: f64,
    pub actual: f64,
}

impl DecisionResponse {
    pub fn new(y_min: f64, y_max: f64, actual: f64) -> Result<Self, DecisionError> {
        let r = Self { y_min, y_max, actual };
        r.check()?;
        Ok(r)
    }

    pub fn y_mean(&self) -> f64 {
        0.5 * (self.y_min + self.y_max)
    }

    pub fn width(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains_actual(&self) -> bool {
        self.y_min <= self.actual && self.actual <= self.y_max
    }

    fn check(&self) -> Result<(), DecisionError> {
        if !(self.y_min.is_finite() && self.y_max.is_finite() && self.actual.is_finite()) {
            return Err(DecisionError::NonFinite);
        }
        if self.y_min > self.y_max {
            return Err(DecisionError::InvertedInterval {
                min: self.y_min,
                max: self.y_max,
            });
        }
        if self.y_min == self.y_max {
            return Err(DecisionError::ZeroWidthInterval);
        }
        Ok(())
    }
}

/// `z_{0.95} − z_{0.05}` of the standard normal.
pub fn z_span_90() -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(0.95) - n.inverse_cdf(0.05)
}

/// Standard deviation of the Gaussian that puts 90% of its mass in the interval.
pub fn gaussian_sigma(r: &DecisionResponse) -> Result<f64, DecisionError> {
    r.check()?;
    Ok(r.width() / z_span_90())
}

/// Density of the actual value under a Gaussian centred on the interval midpoint.
pub fn correctness_probability_density(r: &DecisionResponse) -> Result<f64, DecisionError> {
    let sigma = gaussian_sigma(r)?;
    let z = (r.actual - r.y_mean()) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionMetrics {
    /// `ln |y_mean − y|`, floored.
    pub mean_error_log: f64,
    pub mean_error_floored: bool,
    /// `ln (y_max − y_min)`, floored.
    pub credible_interval_log: f64,
    pub interval_floored: bool,
    pub density: f64,
}

fn floored_ln(v: f64) -> (f64, bool) {
    if v < LOG_FLOOR {
        (LOG_FLOOR.ln(), true)
    } else {
        (v.ln(), false)
    }
}

pub fn decision_metrics(r: &DecisionResponse) -> Result<DecisionMetrics, DecisionError> {
    let density = correctness_probability_density(r)?;
    let (mean_error_log, mean_error_floored) = floored_ln((r.y_mean() - r.actual).abs());
    let (credible_interval_log, interval_floored) = floored_ln(r.width());
    Ok(DecisionMetrics {
        mean_error_log,
        mean_error_floored,
        credible_interval_log,
        interval_floored,
        density,
    })
}
