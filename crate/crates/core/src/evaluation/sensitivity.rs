use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, EvalError};
use crate::explain::ExplainContext;
use crate::methods::derive_seed;
use crate::trace::{fit_trace, DesiderataConfig, TraceModel};

/// Which desiderata weight a sensitivity run varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaKind {
    #[serde(alias = "s")]
    Sparsity,
    #[serde(alias = "d")]
    Disjointness,
    #[serde(alias = "m")]
    Monotonicity,
    #[serde(alias = "e")]
    Evenness,
}

impl LambdaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LambdaKind::Sparsity => "sparsity",
            LambdaKind::Disjointness => "disjointness",
            LambdaKind::Monotonicity => "monotonicity",
            LambdaKind::Evenness => "evenness",
        }
    }

    pub fn apply(self, cfg: &mut DesiderataConfig, value: f64) {
        match self {
            LambdaKind::Sparsity => cfg.lambda_sparsity = value,
            LambdaKind::Disjointness => cfg.lambda_disjointness = value,
            LambdaKind::Monotonicity => cfg.lambda_monotonicity = value,
            LambdaKind::Evenness => cfg.lambda_evenness = value,
        }
    }
}

/// Which comparable-subject pair each seed explains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityPair {
    /// A subject row drawn by the seed and its `rank`-th nearest other row (1 = nearest).
    Sampled { rank: usize },
    /// The same rows for every seed.
    Fixed { comparable: usize, subject: usize },
}

impl Default for SensitivityPair {
    fn default() -> Self {
        SensitivityPair::Sampled { rank: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    #[serde(default)]
    pub base: DesiderataConfig,
    pub vary: LambdaKind,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub pair: SensitivityPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub value: f64,
    pub seed: u64,
    pub subject: usize,
    pub comparable: usize,
    /// `|trace-adjusted comparable prediction − subject prediction|`, target units.
    pub unfaithfulness: f64,
    /// Faithfulness loss of the trained trace.
    pub faithfulness: f64,
    pub adjustments: usize,
    pub reversals: usize,
    /// Variance of the trace's value steps, target units squared.
    pub unevenness: f64,
    pub trace: TraceModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySummary {
    pub value: f64,
    pub n: usize,
    pub unfaithfulness: (f64, f64),
    pub faithfulness: (f64, f64),
    pub adjustments: (f64, f64),
    pub reversals: (f64, f64),
    pub unevenness: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub vary: LambdaKind,
    pub base: DesiderataConfig,
    /// Seed-level rows, one per (value, seed).
    pub rows: Vec<SensitivityRow>,
    /// Mean and standard deviation over seeds, per value.
    pub summary: Vec<SensitivitySummary>,
}

fn pick_pair(ctx: &ExplainContext, pair: &SensitivityPair, seed: u64) -> Result<(usize, usize), EvalError> {
    let n = ctx.dataset.len();
    match *pair {
        SensitivityPair::Fixed { comparable, subject } => {
            if comparable >= n || subject >= n {
                return Err(EvalError::InvalidSpec(format!("pair rows must be below {n}")));
            }
            Ok((comparable, subject))
        }
        SensitivityPair::Sampled { rank } => {
            if rank == 0 || rank >= n {
                return Err(EvalError::InvalidSpec(format!("rank must lie in [1, {}]", n - 1)));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
            let subject = rng.random_range(0..n);
            let set = ctx.comparable_set(&ctx.dataset.rows[subject].instance, Some(subject), rank)?;
            let comparable = set.comparables[rank - 1].row.expect("dataset comparables carry rows");
            Ok((comparable, subject))
        }
    }
}

/// Trains one trace per (value, seed) with the varied weight set to `value`
/// and reports the exact discrete counts of each trace.
pub fn run_sensitivity(ctx: &ExplainContext, spec: &SensitivitySpec) -> Result<SensitivityReport, EvalError> {
    if spec.values.is_empty() {
        return Err(EvalError::InvalidSpec("values must not be empty".into()));
    }
    if spec.seeds.is_empty() {
        return Err(EvalError::InvalidSpec("seeds must not be empty".into()));
    }
    let mut configs = Vec::with_capacity(spec.values.len());
    for &v in &spec.values {
        let mut cfg = spec.base.clone();
        spec.vary.apply(&mut cfg, v);
        cfg.validate().map_err(|e| EvalError::InvalidSpec(e.to_string()))?;
        configs.push(cfg);
    }
    let pairs = spec
        .seeds
        .iter()
        .map(|&s| pick_pair(ctx, &spec.pair, s))
        .collect::<Result<Vec<_>, _>>()?;
    let std = &ctx.standardizer;
    let scale = std.target_scale();
    let p = ctx.predictor();
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|v| (0..spec.seeds.len()).map(move |s| (v, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(vi, si)| -> Result<SensitivityRow, EvalError> {
            let (c, s) = pairs[si];
            let comparable = &ctx.pool()[c];
            let subject = &ctx.pool()[s];
            let cfg = DesiderataConfig {
                seed: derive_seed(spec.seeds[si], c as u64),
                ..configs[vi].clone()
            };
            let fit = fit_trace(p, std.layout(), comparable, subject, scale, &cfg).map_err(crate::methods::MethodError::from)?;
            let preds = p.predict(&[comparable.clone(), subject.clone()])?;
            let loss = &fit.loss;
            Ok(SensitivityRow {
                value: spec.values[vi],
                seed: spec.seeds[si],
                subject: s,
                comparable: c,
                unfaithfulness: (fit.model.adjusted_value(preds[0]) - preds[1]).abs(),
                faithfulness: loss.faithfulness,
                adjustments: loss.adjustments,
                reversals: loss.attribute_reversals + loss.value_reversals,
                unevenness: loss.unevenness * scale * scale,
                trace: fit.model,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let summary = spec
        .values
        .iter()
        .enumerate()
        .map(|(vi, &value)| {
            let mine: Vec<&SensitivityRow> = rows[vi * spec.seeds.len()..(vi + 1) * spec.seeds.len()].iter().collect();
            let stat = |f: fn(&SensitivityRow) -> f64| mean_std(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            SensitivitySummary {
                value,
                n: mine.len(),
                unfaithfulness: stat(|r| r.unfaithfulness),
                faithfulness: stat(|r| r.faithfulness),
                adjustments: stat(|r| r.adjustments as f64),
                reversals: stat(|r| r.reversals as f64),
                unevenness: stat(|r| r.unevenness),
            }
        })
        .collect();
    Ok(SensitivityReport {
        vary: spec.vary,
        base: spec.base.clone(),
        rows,
        summary,
    })
}

impl SensitivityReport {
    pub fn summary_for(&self, value: f64) -> Option<&SensitivitySummary> {
        self.summary.iter().find(|s| s.value == value)
    }

    /// One line per (value, seed).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "lambda",
            "value",
            "seed",
            "subject",
            "comparable",
            "unfaithfulness",
            "faithfulness",
            "adjustments",
            "reversals",
            "unevenness",
        ])?;
        for r in &self.rows {
            w.write_record([
                self.vary.as_str().to_string(),
                r.value.to_string(),
                r.seed.to_string(),
                r.subject.to_string(),
                r.comparable.to_string(),
                r.unfaithfulness.to_string(),
                r.faithfulness.to_string(),
                r.adjustments.to_string(),
                r.reversals.to_string(),
                r.unevenness.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>12} {:>12} {:>12} {:>10} {:>14}\n",
            self.vary.as_str(),
            "unfaithful",
            "L_F",
            "#adjust",
            "#revers",
            "unevenness"
        );
        for r in &self.summary {
            s.push_str(&format!(
                "{:<8} {:>12.6} {:>12.6} {:>12.3} {:>10.3} {:>14.6}\n",
                r.value, r.unfaithfulness.0, r.faithfulness.0, r.adjustments.0, r.reversals.0, r.unevenness.0
            ));
        }
        s
    }
}
