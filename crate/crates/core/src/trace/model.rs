use serde::{Deserialize, Serialize};

use super::TraceError;

/// `v0 + w·(x − a)`: the value at `x` of an affine piece that takes value
/// `v0` at `a`. Shared by the knot recursion and segment evaluation so the
/// two agree to the last bit.
pub(crate) fn affine(v0: f64, w: &[f64], a: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for j in 0..w.len() {
        acc += w[j] * (x[j] - a[j]);
    }
    v0 + acc
}

/// Piecewise-affine counterfactual path from a comparable (first knot) to a
/// subject (last knot).
///
/// Segment `τ` covers arc parameter `t ∈ [(τ−1)/T, τ/T]` and runs in a straight
/// line between knots `τ−1` and `τ`. Only the first segment's bias is stored;
/// every other bias is derived so that adjacent segments meet at their shared
/// knot. Values are kept in units of `target_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceModel {
    pub knots: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub base_bias: f64,
    pub target_scale: f64,
}

impl TraceModel {
    pub fn from_parts(
        knots: Vec<Vec<f64>>,
        weights: Vec<Vec<f64>>,
        base_bias: f64,
        target_scale: f64,
    ) -> Result<Self, TraceError> {
        if weights.is_empty() || knots.len() != weights.len() + 1 {
            return Err(TraceError::InvalidConfig(format!(
                "{} knots cannot bound {} segments",
                knots.len(),
                weights.len()
            )));
        }
        let dim = knots[0].len();
        if let Some(bad) = knots.iter().chain(&weights).find(|v| v.len() != dim) {
            return Err(TraceError::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if !(target_scale > 0.0 && target_scale.is_finite()) {
            return Err(TraceError::InvalidConfig("target scale must be positive".into()));
        }
        Ok(Self {
            knots,
            weights,
            base_bias,
            target_scale,
        })
    }

    pub fn segments(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.knots[0].len()
    }

    /// Scaled trace value at each knot.
    pub fn knot_values(&self) -> Vec<f64> {
        let w1 = &self.weights[0];
        let first = &self.knots[0];
        let mut v = Vec::with_capacity(self.knots.len());
        v.push(self.base_bias + w1.iter().zip(first).map(|(a, b)| a * b).sum::<f64>());
        for tau in 1..=self.segments() {
            let prev = v[tau - 1];
            v.push(affine(prev, &self.weights[tau - 1], &self.knots[tau - 1], &self.knots[tau]));
        }
        v
    }

    /// Scaled value change across each segment.
    pub fn value_deltas(&self) -> Vec<f64> {
        self.knot_values().windows(2).map(|p| p[1] - p[0]).collect()
    }

    /// Intercept of every segment's affine function, first segment's being the stored one.
    pub fn biases(&self) -> Vec<f64> {
        let v = self.knot_values();
        (0..self.segments())
            .map(|i| {
                if i == 0 {
                    self.base_bias
                } else {
                    v[i] - self.weights[i].iter().zip(&self.knots[i]).map(|(a, b)| a * b).sum::<f64>()
                }
            })
            .collect()
    }

    /// Scaled value of segment `tau` (1-based) extended to any `x`.
    pub fn segment_value(&self, tau: usize, x: &[f64]) -> f64 {
        let v = self.knot_values();
        affine(v[tau - 1], &self.weights[tau - 1], &self.knots[tau - 1], x)
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let t_count = self.segments() as f64;
        let pos = (t.clamp(0.0, 1.0) * t_count).min(t_count);
        let tau = (pos.floor() as usize + 1).min(self.segments());
        (tau, pos - (tau - 1) as f64)
    }

    /// Point on the path at arc parameter `t ∈ [0, 1]`.
    pub fn point_at(&self, t: f64) -> Vec<f64> {
        let (tau, s) = self.locate(t);
        let a = &self.knots[tau - 1];
        let b = &self.knots[tau];
        a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
    }

    /// Trace value at arc parameter `t`, in target units.
    pub fn value_at(&self, t: f64) -> f64 {
        let (tau, _) = self.locate(t);
        self.segment_value(tau, &self.point_at(t)) * self.target_scale
    }

    /// Trace value at a point on the path, in target units.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, TraceError> {
        if x.len() != self.dim() {
            return Err(TraceError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let tol = 1e-9;
        for tau in 1..=self.segments() {
            let a = &self.knots[tau - 1];
            let b = &self.knots[tau];
            let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
            let dd: f64 = d.iter().map(|v| v * v).sum();
            let s = if dd > 0.0 {
                d.iter().zip(x).zip(a).map(|((dv, xv), av)| dv * (xv - av)).sum::<f64>() / dd
            } else {
                0.0
            };
            if !(-tol..=1.0 + tol).contains(&s) {
                continue;
            }
            let off: f64 = (0..x.len()).map(|j| (a[j] + s * d[j] - x[j]).abs()).fold(0.0, f64::max);
            if off <= tol * (1.0 + dd.sqrt()) {
                return Ok(self.segment_value(tau, x) * self.target_scale);
            }
        }
        Err(TraceError::OutOfDomain)
    }

    /// Adjusted value implied by this trace starting from `anchor_value` (target units).
    pub fn adjusted_value(&self, anchor_value: f64) -> f64 {
        anchor_value + self.value_deltas().iter().map(|d| d * self.target_scale).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_segment() -> TraceModel {
        TraceModel::from_parts(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 2.0]],
            vec![vec![2.0, 7.0], vec![-1.0, 0.5]],
            3.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn knot_values_by_hand() {
        let m = two_segment();
        // v0 = 3; v1 = 3 + 2·1 = 5; v2 = 5 + 0.5·2 = 6
        assert_eq!(m.knot_values(), vec![3.0, 5.0, 6.0]);
        assert_eq!(m.value_deltas(), vec![2.0, 1.0]);
        // b2 = v1 − w2·χ1 = 5 − (−1) = 6
        assert_eq!(m.biases(), vec![3.0, 6.0]);
    }

    #[test]
    fn first_knot_value_is_first_affine_piece() {
        let m = two_segment();
        let x0 = m.knots[0].clone();
        let direct = m.weights[0].iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>() + m.base_bias;
        assert_eq!(m.evaluate(&x0).unwrap(), direct);
    }

    #[test]
    fn interior_knot_continuity_is_exact() {
        let m = two_segment();
        let k = m.knots[1].clone();
        assert_eq!(m.segment_value(1, &k).to_bits(), m.segment_value(2, &k).to_bits());
    }

    #[test]
    fn arc_parameter_selects_segment() {
        let m = two_segment();
        assert_eq!(m.point_at(0.25), vec![0.5, 0.0]);
        assert_eq!(m.point_at(0.75), vec![1.0, 1.0]);
        assert_eq!(m.value_at(0.75), 5.5);
        assert_eq!(m.value_at(1.0), 6.0);
        assert_eq!(m.evaluate(&[1.0, 1.0]).unwrap(), 5.5);
    }

    #[test]
    fn off_path_points_are_rejected() {
        let m = two_segment();
        assert!(matches!(m.evaluate(&[0.5, 0.5]), Err(TraceError::OutOfDomain)));
        assert!(matches!(m.evaluate(&[2.0, 0.0]), Err(TraceError::OutOfDomain)));
    }

    #[test]
    fn scale_applies_to_outputs() {
        let mut m = two_segment();
        m.target_scale = 1000.0;
        assert_eq!(m.value_at(0.0), 3000.0);
        assert_eq!(m.adjusted_value(10.0), 3010.0);
    }

    #[test]
    fn malformed_parts_rejected() {
        assert!(TraceModel::from_parts(vec![vec![0.0]], vec![vec![1.0]], 0.0, 1.0).is_err());
        assert!(TraceModel::from_parts(vec![vec![0.0], vec![1.0, 2.0]], vec![vec![1.0]], 0.0, 1.0).is_err());
        assert!(TraceModel::from_parts(vec![vec![0.0], vec![1.0]], vec![vec![1.0]], 0.0, 0.0).is_err());
    }
}
