use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{evaluate_loss, loss_and_gradient, sample_point, samples, LossBreakdown, TraceParams};
use super::{DesiderataConfig, TraceError, TraceModel};
use crate::baselines::{fit_local_linear, LocalSampling};
use crate::linalg::least_absolute;
use crate::optim::Adam;
use crate::predictors::{predict_one, Predictor};
use crate::schema::{BlockKind, FeatureLayout};

/// Upper bound on the automatically chosen segment count.
pub const MAX_AUTO_SEGMENTS: usize = 8;

/// Relative improvement that resets the plateau counter.
const PLATEAU_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFit {
    pub model: TraceModel,
    pub loss: LossBreakdown,
    pub epochs: usize,
    pub best_epoch: usize,
    pub lr_reductions: usize,
}

/// One segment per attribute that differs by more than `delta`, within `[1, 8]`.
pub fn default_segments(layout: &FeatureLayout, comparable: &[f64], subject: &[f64], delta: f64) -> usize {
    layout
        .blocks()
        .iter()
        .filter(|b| layout.block_change(b, comparable, subject) > delta)
        .count()
        .clamp(1, MAX_AUTO_SEGMENTS)
}

/// Keeps each one-hot block of an interior knot on the segment between its
/// comparable and subject encodings.
fn project_categoricals(layout: &FeatureLayout, knot: &mut [f64], first: &[f64], last: &[f64]) {
    for block in layout.blocks().iter().filter(|b| b.kind == BlockKind::Categorical) {
        let cols = block.columns();
        let dd: f64 = cols.clone().map(|c| (last[c] - first[c]).powi(2)).sum();
        let alpha = if dd > 0.0 {
            let proj: f64 = cols.clone().map(|c| (knot[c] - first[c]) * (last[c] - first[c])).sum();
            (proj / dd).clamp(0.0, 1.0)
        } else {
            0.0
        };
        for c in cols {
            knot[c] = first[c] + alpha * (last[c] - first[c]);
        }
    }
}

/// With the knots held fixed, the weights only enter the objective through
/// faithfulness, and the trace along the path is the interpolant of its knot
/// values. Solves that least-absolute-deviation problem exactly and moves each
/// segment's weights minimally to realize the new knot values.
fn refit_values(p: &dyn Predictor, m: &TraceModel, per_segment: usize) -> Result<TraceModel, TraceError> {
    let t = m.segments();
    let pts = samples(t, per_segment);
    let xs: Vec<Vec<f64>> = pts.iter().map(|sm| sample_point(m, sm)).collect();
    let ys: Vec<f64> = p.predict(&xs)?.iter().map(|y| y / m.target_scale).collect();
    let rows: Vec<Vec<f64>> = pts
        .iter()
        .map(|sm| {
            let mut row = vec![0.0; t + 1];
            if sm.tau == 0 {
                row[sm.knot] = 1.0;
            } else {
                row[sm.tau - 1] = 1.0 - sm.s;
                row[sm.tau] = sm.s;
            }
            row
        })
        .collect();
    let v = least_absolute(&rows, &ys, 100);
    let mut out = m.clone();
    for tau in 1..=t {
        let a = &m.knots[tau - 1];
        let b = &m.knots[tau];
        let dchi: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let dd: f64 = dchi.iter().map(|x| x * x).sum();
        if dd == 0.0 {
            continue;
        }
        let w = &mut out.weights[tau - 1];
        let gap = (v[tau] - v[tau - 1]) - w.iter().zip(&dchi).map(|(x, y)| x * y).sum::<f64>();
        for (wj, dj) in w.iter_mut().zip(&dchi) {
            *wj += gap * dj / dd;
        }
    }
    out.base_bias = v[0] - out.weights[0].iter().zip(&m.knots[0]).map(|(x, y)| x * y).sum::<f64>();
    Ok(out)
}

/// Trains a trace from `comparable` to `subject` on the predictor's surface.
///
/// Starts from the straight line with local-linear weights, both perturbed by
/// seeded Gaussian noise, then runs Adam with plateau-triggered learning-rate
/// cuts. The iterate with the lowest objective gets a final exact refit of
/// its knot values.
pub fn fit_trace(
    p: &dyn Predictor,
    layout: &FeatureLayout,
    comparable: &[f64],
    subject: &[f64],
    target_scale: f64,
    cfg: &DesiderataConfig,
) -> Result<TraceFit, TraceError> {
    cfg.validate()?;
    let d = layout.dim();
    for len in [comparable.len(), subject.len(), p.dim()] {
        if len != d {
            return Err(TraceError::DimensionMismatch { expected: d, got: len });
        }
    }
    if comparable == subject {
        return Err(TraceError::NoDifference);
    }
    if !(target_scale > 0.0 && target_scale.is_finite()) {
        return Err(TraceError::InvalidConfig("target scale must be positive".into()));
    }
    let t = cfg
        .segments
        .unwrap_or_else(|| default_segments(layout, comparable, subject, cfg.delta));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.init_std).map_err(|e| TraceError::InvalidConfig(e.to_string()))?;
    let local = fit_local_linear(p, layout, comparable, LocalSampling::default(), cfg.seed)?;
    let start_value = predict_one(p, comparable)? / target_scale;

    let mut knots = Vec::with_capacity(t + 1);
    knots.push(comparable.to_vec());
    for tau in 1..t {
        let a = tau as f64 / t as f64;
        let mut k: Vec<f64> = comparable
            .iter()
            .zip(subject)
            .map(|(c, s)| c + a * (s - c) + noise.sample(&mut rng))
            .collect();
        project_categoricals(layout, &mut k, comparable, subject);
        knots.push(k);
    }
    knots.push(subject.to_vec());
    let weights: Vec<Vec<f64>> = (0..t)
        .map(|_| {
            local
                .weights
                .iter()
                .map(|w| w / target_scale + noise.sample(&mut rng))
                .collect()
        })
        .collect();
    let base_bias = start_value - weights[0].iter().zip(comparable).map(|(w, c)| w * c).sum::<f64>();
    let init = TraceModel::from_parts(knots, weights, base_bias, target_scale)?;

    let params = TraceParams {
        first: comparable.to_vec(),
        last: subject.to_vec(),
        segments: t,
        target_scale,
    };
    let mut theta = params.flatten(&init);
    let knot_base = 1 + t * d;
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);

    let mut best: Option<(f64, Vec<f64>, LossBreakdown, usize)> = None;
    let mut plateau_ref = f64::INFINITY;
    let mut stale = 0;
    let mut reductions = 0;
    let mut epochs = 0;
    for epoch in 0..cfg.max_epochs {
        epochs = epoch + 1;
        let model = params.model(&theta);
        let (loss, grad) = loss_and_gradient(&model, p, layout, cfg)?;
        if !loss.objective.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TraceError::Diverged { epoch });
        }
        if best.as_ref().is_none_or(|b| loss.objective < b.0) {
            best = Some((loss.objective, theta.clone(), loss.clone(), epoch));
        }
        if loss.objective < plateau_ref - PLATEAU_THRESHOLD * plateau_ref.abs() {
            plateau_ref = loss.objective;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.lr_patience {
                reductions += 1;
                if reductions > cfg.max_lr_reductions {
                    reductions -= 1;
                    break;
                }
                adam.lr *= cfg.lr_decay;
                stale = 0;
                plateau_ref = best.as_ref().map_or(f64::INFINITY, |b| b.0);
            }
        }
        adam.step(&mut theta, &grad);
        for i in 0..t - 1 {
            let knot = &mut theta[knot_base + i * d..knot_base + (i + 1) * d];
            project_categoricals(layout, knot, comparable, subject);
        }
    }
    let (_, theta, mut loss, best_epoch) = best.expect("at least one epoch");
    let mut model = params.model(&theta);
    let refit = refit_values(p, &model, cfg.samples_per_segment)?;
    let refit_loss = evaluate_loss(&refit, p, layout, cfg)?;
    if refit_loss.objective.is_finite() && refit_loss.objective <= loss.objective {
        model = refit;
        loss = refit_loss;
    }
    Ok(TraceFit {
        model,
        loss,
        epochs,
        best_epoch,
        lr_reductions: reductions,
    })
}
