//! Weighted ridge least squares with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub residual_rmse: f64,
    /// Ratio of extreme singular values of the centered design; `None` when
    /// the design is rank deficient and the ridge term decides the solution.
    pub condition_number: Option<f64>,
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub diagnostics: FitDiagnostics,
}

/// Minimizes `Σ s_i (y_i − w·x_i − b)² + λ‖w‖²`.
///
/// Solved through the SVD of the weighted, centered design so that singular
/// directions receive the minimum-norm (ridge-shrunk) weights.
pub fn ridge(xs: &[Vec<f64>], ys: &[f64], sample_weights: Option<&[f64]>, lambda: f64) -> RidgeFit {
    let n = xs.len();
    let d = xs.first().map_or(0, Vec::len);
    let s: Vec<f64> = match sample_weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; n],
    };
    let total: f64 = s.iter().sum();
    let mut x_mean = vec![0.0; d];
    let mut y_mean = 0.0;
    for ((x, &y), &w) in xs.iter().zip(ys).zip(&s) {
        for (m, v) in x_mean.iter_mut().zip(x) {
            *m += w * v / total;
        }
        y_mean += w * y / total;
    }
    let design = DMatrix::from_fn(n, d, |i, j| s[i].sqrt() * (xs[i][j] - x_mean[j]));
    let target = DVector::from_fn(n, |i, _| s[i].sqrt() * (ys[i] - y_mean));

    let mut weights = vec![0.0; d];
    let mut condition_number = None;
    let mut regularized = n < d + 1;
    if d > 0 && n > 0 {
        let svd = design.svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let sv = &svd.singular_values;
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if sv.len() < d || smin <= 1e-10 * smax.max(f64::MIN_POSITIVE) {
            regularized = true;
        } else {
            condition_number = Some(smax / smin);
        }
        for (k, &sigma) in sv.iter().enumerate() {
            if sigma <= 0.0 {
                continue;
            }
            let coef = sigma / (sigma * sigma + lambda) * u.column(k).dot(&target);
            for (j, w) in weights.iter_mut().enumerate() {
                *w += coef * v_t[(k, j)];
            }
        }
    }
    let bias = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let fit = bias + weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            (y - fit).powi(2)
        })
        .sum();
    RidgeFit {
        weights,
        bias,
        diagnostics: FitDiagnostics {
            residual_rmse: (sse / n.max(1) as f64).sqrt(),
            condition_number,
            regularized,
        },
    }
}

/// Least absolute deviations `min Σ |a_i·x − y_i|` by iteratively reweighted
/// least squares. Returns the best iterate seen.
pub fn least_absolute(rows: &[Vec<f64>], ys: &[f64], iterations: usize) -> Vec<f64> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    let a = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(ys);
    let l1 = |x: &DVector<f64>| (&a * x - &y).abs().sum();
    let mut weights = vec![1.0; n];
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..iterations.max(1) {
        let mut normal = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        for i in 0..n {
            let row = a.row(i);
            normal += weights[i] * row.transpose() * row;
            rhs += weights[i] * ys[i] * row.transpose();
        }
        let scale = normal.diagonal().max().max(1.0);
        for j in 0..d {
            normal[(j, j)] += 1e-12 * scale;
        }
        let Some(x) = normal.cholesky().map(|c| c.solve(&rhs)) else {
            break;
        };
        let err = l1(&x);
        let resid = &a * &x - &y;
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, x));
        }
        for i in 0..n {
            weights[i] = 1.0 / resid[i].abs().max(1e-10);
        }
    }
    best.map_or_else(|| vec![0.0; d], |b| b.1.iter().copied().collect())
}
