//! The trace objective and its gradient.
//!
//! The gradient is derived by hand in reverse mode. The chain runs
//! parameters → knot differences and value deltas → knot values → losses,
//! and the adjoints are accumulated in the opposite order.

use serde::{Deserialize, Serialize};

use super::{DesiderataConfig, TraceError, TraceModel};
use crate::predictors::{gradients_or_fd, Predictor};
use crate::schema::{BlockKind, FeatureLayout};

/// Step for finite-difference predictor gradients during training.
pub const PREDICTOR_FD_STEP: f64 = 1e-4;

/// Width of the soft change indicator, as a fraction of the threshold.
const SOFT_COUNT_WIDTH: f64 = 0.1;
/// Temperature of the soft maximum over attributes.
const SOFT_MAX_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `Σ λ·L` over the reported components.
    pub total: f64,
    /// The differentiable objective actually minimized (soft change counts).
    pub objective: f64,
    pub faithfulness: f64,
    pub sparsity: f64,
    /// Largest per-attribute change count.
    pub disjointness: f64,
    pub monotonicity: f64,
    pub evenness: f64,
    /// Segments in which each attribute changes by more than the threshold.
    pub change_counts: Vec<usize>,
    /// Total attribute changes across all segments.
    pub adjustments: usize,
    /// Direction flips between consecutive significant changes of an attribute.
    pub attribute_reversals: usize,
    /// Sign flips between consecutive significant value steps.
    pub value_reversals: usize,
    /// Per-segment trace value changes, in units of the target scale.
    pub value_deltas: Vec<f64>,
    pub mean_value_delta: f64,
    /// Population variance of the trace value changes.
    pub unevenness: f64,
    /// Per-segment change of the model's output between consecutive knots,
    /// in units of the target scale. Evenness and value monotonicity act on these.
    pub label_deltas: Vec<f64>,
}

/// Flat layout of a trace's free parameters: first-segment bias, segment
/// weights, then interior knots. Endpoint knots are held here and never move.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceParams {
    pub first: Vec<f64>,
    pub last: Vec<f64>,
    pub segments: usize,
    pub target_scale: f64,
}

impl TraceParams {
    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn len(&self) -> usize {
        1 + self.segments * self.dim() + (self.segments - 1) * self.dim()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn flatten(&self, m: &TraceModel) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.push(m.base_bias);
        for w in &m.weights {
            out.extend_from_slice(w);
        }
        for k in &m.knots[1..m.segments()] {
            out.extend_from_slice(k);
        }
        out
    }

    pub fn model(&self, flat: &[f64]) -> TraceModel {
        let d = self.dim();
        let t = self.segments;
        let weights = (0..t).map(|i| flat[1 + i * d..1 + (i + 1) * d].to_vec()).collect();
        let base = 1 + t * d;
        let mut knots = Vec::with_capacity(t + 1);
        knots.push(self.first.clone());
        for i in 0..t - 1 {
            knots.push(flat[base + i * d..base + (i + 1) * d].to_vec());
        }
        knots.push(self.last.clone());
        TraceModel {
            knots,
            weights,
            base_bias: flat[0],
            target_scale: self.target_scale,
        }
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn count_flips(signs: impl Iterator<Item = f64>) -> usize {
    let mut last = 0.0;
    let mut flips = 0;
    for s in signs {
        if last != 0.0 && s != last {
            flips += 1;
        }
        last = s;
    }
    flips
}

pub(crate) struct Sample {
    /// Segment the point sits on (1-based), or 0 for a knot.
    pub tau: usize,
    pub s: f64,
    pub knot: usize,
}

pub(crate) fn samples(t: usize, per_segment: usize) -> Vec<Sample> {
    let mut out = Vec::with_capacity(t * per_segment + t + 1);
    for knot in 0..=t {
        out.push(Sample { tau: 0, s: 0.0, knot });
    }
    for tau in 1..=t {
        for i in 1..=per_segment {
            out.push(Sample {
                tau,
                s: i as f64 / (per_segment + 1) as f64,
                knot: 0,
            });
        }
    }
    out
}

pub(crate) fn sample_point(m: &TraceModel, sm: &Sample) -> Vec<f64> {
    if sm.tau == 0 {
        return m.knots[sm.knot].clone();
    }
    let a = &m.knots[sm.tau - 1];
    let b = &m.knots[sm.tau];
    a.iter().zip(b).map(|(x, y)| x + sm.s * (y - x)).collect()
}

/// Sign of a block's change: the numeric change, or progress along the
/// comparable-to-subject direction for a one-hot block.
fn block_direction(m: &TraceModel, block: &crate::schema::FeatureBlock, delta: &[f64]) -> f64 {
    match block.kind {
        BlockKind::Numeric => sgn(delta[block.start]),
        BlockKind::Categorical => {
            let first = &m.knots[0];
            let last = &m.knots[m.segments()];
            sgn(block.columns().map(|c| delta[c] * (last[c] - first[c])).sum())
        }
    }
}

/// Loss breakdown without gradients.
pub fn evaluate_loss(
    m: &TraceModel,
    p: &dyn Predictor,
    layout: &FeatureLayout,
    cfg: &DesiderataConfig,
) -> Result<LossBreakdown, TraceError> {
    Ok(compute(m, p, layout, cfg, false)?.0)
}

/// Loss breakdown plus the gradient of the objective over the free
/// parameters, in [`TraceParams`] order.
pub fn loss_and_gradient(
    m: &TraceModel,
    p: &dyn Predictor,
    layout: &FeatureLayout,
    cfg: &DesiderataConfig,
) -> Result<(LossBreakdown, Vec<f64>), TraceError> {
    let (loss, grad) = compute(m, p, layout, cfg, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn compute(
    m: &TraceModel,
    p: &dyn Predictor,
    layout: &FeatureLayout,
    cfg: &DesiderataConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Vec<f64>>), TraceError> {
    let d = m.dim();
    if p.dim() != d || layout.dim() != d {
        return Err(TraceError::DimensionMismatch {
            expected: d,
            got: if p.dim() != d { p.dim() } else { layout.dim() },
        });
    }
    let t = m.segments();
    let scale = m.target_scale;
    let col_w = layout.column_weights();

    let v = m.knot_values();
    let dchi: Vec<Vec<f64>> = (1..=t)
        .map(|tau| m.knots[tau].iter().zip(&m.knots[tau - 1]).map(|(b, a)| b - a).collect())
        .collect();
    let dy: Vec<f64> = (0..t).map(|i| v[i + 1] - v[i]).collect();

    let mut g_v = vec![0.0; t + 1];
    let mut g_dy = vec![0.0; t];
    let mut g_dchi = vec![vec![0.0; d]; t];
    let mut g_knot = vec![vec![0.0; d]; t + 1];
    let mut g_w = vec![vec![0.0; d]; t];

    // faithfulness
    let pts = samples(t, cfg.samples_per_segment);
    let xs: Vec<Vec<f64>> = pts.iter().map(|sm| sample_point(m, sm)).collect();
    let ys = p.predict(&xs)?;
    let grads_f = if want_grad {
        Some(gradients_or_fd(p, &xs, PREDICTOR_FD_STEP)?)
    } else {
        None
    };
    let n = pts.len() as f64;
    let mut faithfulness = 0.0;
    for (i, sm) in pts.iter().enumerate() {
        let trace_y = if sm.tau == 0 {
            v[sm.knot]
        } else {
            v[sm.tau - 1] + sm.s * dy[sm.tau - 1]
        };
        let resid = trace_y - ys[i] / scale;
        faithfulness += resid.abs() / n;
        if let Some(gf) = &grads_f {
            let r = cfg.lambda_faithfulness * sgn(resid) / n;
            if r == 0.0 {
                continue;
            }
            let gx: Vec<f64> = gf[i].iter().map(|g| -r * g / scale).collect();
            if sm.tau == 0 {
                g_v[sm.knot] += r;
                for (a, b) in g_knot[sm.knot].iter_mut().zip(&gx) {
                    *a += b;
                }
            } else {
                g_v[sm.tau - 1] += r;
                g_dy[sm.tau - 1] += r * sm.s;
                for j in 0..d {
                    g_knot[sm.tau - 1][j] += (1.0 - sm.s) * gx[j];
                    g_knot[sm.tau][j] += sm.s * gx[j];
                }
            }
        }
    }

    // labels of the counterfactuals: the model's outputs at the knots
    let labels: Vec<f64> = ys[..=t].iter().map(|y| y / scale).collect();
    let dl: Vec<f64> = labels.windows(2).map(|p| p[1] - p[0]).collect();
    let mut g_dl = vec![0.0; t];

    // sparsity
    let mut sparsity = 0.0;
    for (tau, dc) in dchi.iter().enumerate() {
        for j in 0..d {
            sparsity += col_w[j] * dc[j].abs();
            g_dchi[tau][j] += cfg.lambda_sparsity * col_w[j] * sgn(dc[j]);
        }
    }

    // disjointness: exact counts reported, soft counts optimized
    let blocks = layout.blocks();
    let width = SOFT_COUNT_WIDTH * cfg.delta;
    let mut change_counts = vec![0usize; blocks.len()];
    let mut soft = vec![0.0; blocks.len()];
    let mut soft_slope = vec![vec![0.0; blocks.len()]; t];
    for (tau, dc) in dchi.iter().enumerate() {
        for (r, block) in blocks.iter().enumerate() {
            let change = block.column_weight() * block.columns().map(|c| dc[c].abs()).sum::<f64>();
            if change > cfg.delta {
                change_counts[r] += 1;
            }
            let sg = sigmoid((change - cfg.delta) / width);
            soft[r] += sg;
            soft_slope[tau][r] = sg * (1.0 - sg) / width;
        }
    }
    let disjointness = change_counts.iter().copied().max().unwrap_or(0) as f64;
    let soft_max = soft.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = soft
        .iter()
        .map(|s| ((s - soft_max) / SOFT_MAX_TEMPERATURE).exp())
        .collect();
    let z: f64 = exps.iter().sum();
    let disjointness_smooth = soft_max + SOFT_MAX_TEMPERATURE * z.ln();
    if cfg.lambda_disjointness != 0.0 {
        for (tau, dc) in dchi.iter().enumerate() {
            for (r, block) in blocks.iter().enumerate() {
                let coef = cfg.lambda_disjointness * exps[r] / z * soft_slope[tau][r] * block.column_weight();
                for c in block.columns() {
                    g_dchi[tau][c] += coef * sgn(dc[c]);
                }
            }
        }
    }

    // monotonicity
    let mut monotonicity = 0.0;
    for tau in 1..t {
        for j in 0..d {
            let prod = dchi[tau][j] * dchi[tau - 1][j];
            if prod < 0.0 {
                monotonicity -= prod;
                g_dchi[tau][j] -= cfg.lambda_monotonicity * dchi[tau - 1][j];
                g_dchi[tau - 1][j] -= cfg.lambda_monotonicity * dchi[tau][j];
            }
        }
        let prod = dl[tau] * dl[tau - 1];
        if prod < 0.0 {
            monotonicity -= prod;
            g_dl[tau] -= cfg.lambda_monotonicity * dl[tau - 1];
            g_dl[tau - 1] -= cfg.lambda_monotonicity * dl[tau];
        }
    }

    // evenness
    let mean_dl = dl.iter().sum::<f64>() / t as f64;
    let evenness: f64 = dl.iter().map(|x| (x - mean_dl).powi(2)).sum();
    for (g, x) in g_dl.iter_mut().zip(&dl) {
        *g += 2.0 * cfg.lambda_evenness * (x - mean_dl);
    }
    let mean_dy = dy.iter().sum::<f64>() / t as f64;
    let unevenness = dy.iter().map(|x| (x - mean_dy).powi(2)).sum::<f64>() / t as f64;

    let mut attribute_reversals = 0;
    for block in blocks {
        let signs = dchi
            .iter()
            .filter(|dc| block.column_weight() * block.columns().map(|c| dc[c].abs()).sum::<f64>() > cfg.delta)
            .map(|dc| block_direction(m, block, dc));
        attribute_reversals += count_flips(signs);
    }
    let value_reversals = count_flips(dy.iter().filter(|x| x.abs() > cfg.delta).map(|x| sgn(*x)));

    let weighted = |l_d: f64| {
        cfg.lambda_faithfulness * faithfulness
            + cfg.lambda_sparsity * sparsity
            + cfg.lambda_disjointness * l_d
            + cfg.lambda_monotonicity * monotonicity
            + cfg.lambda_evenness * evenness
    };
    let breakdown = LossBreakdown {
        total: weighted(disjointness),
        objective: weighted(disjointness_smooth),
        faithfulness,
        sparsity,
        disjointness,
        monotonicity,
        evenness,
        adjustments: change_counts.iter().sum(),
        change_counts,
        attribute_reversals,
        value_reversals,
        mean_value_delta: mean_dy,
        unevenness,
        value_deltas: dy.clone(),
        label_deltas: dl.clone(),
    };
    if !want_grad {
        return Ok((breakdown, None));
    }

    // knot labels: Δŷ_τ = ŷ(χ_τ) − ŷ(χ_{τ−1})
    let gf = grads_f.as_ref().expect("gradients computed");
    for tau in 0..t {
        for j in 0..d {
            g_knot[tau + 1][j] += g_dl[tau] * gf[tau + 1][j] / scale;
            g_knot[tau][j] -= g_dl[tau] * gf[tau][j] / scale;
        }
    }
    // knot values: v_τ = v_{τ−1} + Δỹ_τ
    for tau in (1..=t).rev() {
        g_v[tau - 1] += g_v[tau];
        g_dy[tau - 1] += g_v[tau];
    }
    // v_0 = w_1·χ_0 + b_1
    let g_b1 = g_v[0];
    for j in 0..d {
        g_w[0][j] += g_v[0] * m.knots[0][j];
    }
    // Δỹ_τ = w_τ·Δχ_τ
    for tau in 0..t {
        for j in 0..d {
            g_w[tau][j] += g_dy[tau] * dchi[tau][j];
            g_dchi[tau][j] += g_dy[tau] * m.weights[tau][j];
        }
    }
    // Δχ_τ = χ_τ − χ_{τ−1}
    for tau in 0..t {
        for j in 0..d {
            g_knot[tau + 1][j] += g_dchi[tau][j];
            g_knot[tau][j] -= g_dchi[tau][j];
        }
    }

    let mut flat = Vec::with_capacity(1 + (2 * t - 1) * d);
    flat.push(g_b1);
    for w in &g_w {
        flat.extend_from_slice(w);
    }
    for k in &g_knot[1..t] {
        flat.extend_from_slice(k);
    }
    Ok((breakdown, Some(flat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictors::SyntheticPredictor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg_all_on() -> DesiderataConfig {
        DesiderataConfig {
            delta: 0.05,
            ..DesiderataConfig::default()
        }
    }

    fn straight(first: Vec<f64>, last: Vec<f64>, t: usize, w: Vec<f64>, b: f64) -> TraceModel {
        let knots = (0..=t)
            .map(|i| {
                let a = i as f64 / t as f64;
                first.iter().zip(&last).map(|(x, y)| x + a * (y - x)).collect()
            })
            .collect();
        TraceModel::from_parts(knots, vec![w; t], b, 1.0).unwrap()
    }

    #[test]
    fn exact_fit_on_linear_has_zero_faithfulness() {
        let p = SyntheticPredictor::linear(vec![2.0, -1.0], 0.5);
        let m = straight(vec![0.0, 0.0], vec![1.0, 3.0], 3, vec![2.0, -1.0], 0.5);
        let cfg = DesiderataConfig::faithfulness_only();
        let l = evaluate_loss(&m, &p, &FeatureLayout::numeric(2), &cfg).unwrap();
        assert!(l.faithfulness < 1e-12);
        assert!(l.total < 1e-12);
    }

    #[test]
    fn straight_single_attribute_trace_is_monotone() {
        let p = SyntheticPredictor::linear(vec![1.0], 0.0);
        let m = straight(vec![0.0], vec![2.0], 1, vec![1.0], 0.0);
        let l = evaluate_loss(&m, &p, &FeatureLayout::numeric(1), &cfg_all_on()).unwrap();
        assert_eq!(l.monotonicity, 0.0);
        assert!(l.disjointness <= 1.0);
        assert_eq!(l.value_reversals + l.attribute_reversals, 0);
    }

    #[test]
    fn equal_steps_have_zero_evenness() {
        let p = SyntheticPredictor::linear(vec![1.0], 0.0);
        let m = straight(vec![0.0], vec![2.0], 2, vec![3.0], 0.0);
        let l = evaluate_loss(&m, &p, &FeatureLayout::numeric(1), &cfg_all_on()).unwrap();
        assert_eq!(l.evenness, 0.0);
        assert_eq!(l.value_deltas, vec![3.0, 3.0]);
    }

    #[test]
    fn components_by_hand() {
        // knots 0 → (1,0) → (0.5,1): first coordinate reverses
        let m = TraceModel::from_parts(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 1.0]],
            vec![vec![1.0, 0.0], vec![1.0, 2.0]],
            0.0,
            1.0,
        )
        .unwrap();
        let p = SyntheticPredictor::linear(vec![1.0, 0.5], 0.0);
        let cfg = cfg_all_on();
        let l = evaluate_loss(&m, &p, &FeatureLayout::numeric(2), &cfg).unwrap();
        // Δχ = (1,0), (−0.5,1); trace Δỹ = 1, 1.5; model labels 0, 1, 1 so Δŷ = 1, 0
        assert!((l.sparsity - 2.5).abs() < 1e-12);
        assert_eq!(l.change_counts, vec![2, 1]);
        assert_eq!(l.disjointness, 2.0);
        assert!((l.monotonicity - 0.5).abs() < 1e-12);
        assert!((l.evenness - 0.5).abs() < 1e-12);
        assert!((l.unevenness - 0.0625).abs() < 1e-12);
        assert_eq!(l.label_deltas, vec![1.0, 0.0]);
        assert_eq!(l.attribute_reversals, 1);
        assert_eq!(l.value_reversals, 0);
        let expected = l.faithfulness + 10.0 * 2.5 + 10.0 * 2.0 + 0.5 + 0.5;
        assert!((l.total - expected).abs() < 1e-12);
    }

    fn fd_check(p: &dyn Predictor, layout: &FeatureLayout, m: &TraceModel, cfg: &DesiderataConfig) -> f64 {
        let params = TraceParams {
            first: m.knots[0].clone(),
            last: m.knots[m.segments()].clone(),
            segments: m.segments(),
            target_scale: m.target_scale,
        };
        let theta = params.flatten(m);
        let (_, g) = loss_and_gradient(m, p, layout, cfg).unwrap();
        let h = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..theta.len() {
            let mut hi = theta.clone();
            hi[i] += h;
            let mut lo = theta.clone();
            lo[i] -= h;
            let fh = evaluate_loss(&params.model(&hi), p, layout, cfg).unwrap().objective;
            let fl = evaluate_loss(&params.model(&lo), p, layout, cfg).unwrap().objective;
            let fd = (fh - fl) / (2.0 * h);
            num += (fd - g[i]).powi(2);
            den += fd.powi(2).max(g[i].powi(2));
        }
        num.sqrt() / den.sqrt().max(1e-12)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = SyntheticPredictor::sinusoid_plus_linear(vec![1.0, 0.6, 1.2], vec![1.3, 2.0, 0.7], vec![0.5, -0.2, 0.1], 0.2);
        for _ in 0..10 {
            let d = 3;
            let t = rng.random_range(1..=4);
            let knots: Vec<Vec<f64>> = (0..=t).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let weights = (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let m = TraceModel::from_parts(knots, weights, rng.random_range(-1.0..1.0), 1.7).unwrap();
            let cfg = DesiderataConfig {
                delta: 0.3,
                samples_per_segment: 4,
                ..DesiderataConfig::default()
            };
            let err = fd_check(&p, &FeatureLayout::numeric(d), &m, &cfg);
            assert!(err < 1e-4, "relative gradient error {err}");
        }
    }

    #[test]
    fn params_round_trip_pins_endpoints() {
        let m = straight(vec![0.1, 0.2], vec![1.0, -3.0], 3, vec![1.0, 2.0], 0.5);
        let params = TraceParams {
            first: m.knots[0].clone(),
            last: m.knots[3].clone(),
            segments: 3,
            target_scale: 1.0,
        };
        let flat = params.flatten(&m);
        assert_eq!(flat.len(), params.len());
        assert_eq!(params.model(&flat), m);
    }
}
