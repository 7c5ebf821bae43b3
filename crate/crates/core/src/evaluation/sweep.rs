use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_std, EvalError};
use crate::baselines::LocalSampling;
use crate::comparables::{Method, ValueChannel};
use crate::explain::ExplainContext;
use crate::methods::{self, derive_seed};
use crate::trace::DesiderataConfig;

pub const EVAL_REPORT_VERSION: u32 = 1;

/// How cases are grouped along the average-distance axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceBins {
    /// `n` equal-width bins over the observed range.
    EqualWidth(usize),
    /// `n` bins holding (nearly) equal numbers of cases.
    Quantile(usize),
    /// Explicit ascending edges; cases outside them are dropped.
    Edges(Vec<f64>),
}

impl Default for DistanceBins {
    fn default() -> Self {
        DistanceBins::EqualWidth(8)
    }
}

impl DistanceBins {
    /// Ascending bin edges for the observed values.
    pub fn edges(&self, values: &[f64]) -> Vec<f64> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match self {
            DistanceBins::Edges(e) => e.clone(),
            DistanceBins::EqualWidth(n) => (0..=*n).map(|i| lo + (hi - lo) * i as f64 / *n as f64).collect(),
            DistanceBins::Quantile(n) => {
                let mut sorted = values.to_vec();
                sorted.sort_by(f64::total_cmp);
                let mut e: Vec<f64> = (0..=*n)
                    .map(|i| {
                        let pos = (sorted.len() - 1) as f64 * i as f64 / *n as f64;
                        let (a, frac) = (pos.floor() as usize, pos.fract());
                        let b = (a + 1).min(sorted.len() - 1);
                        sorted[a] + frac * (sorted[b] - sorted[a])
                    })
                    .collect();
                e.dedup();
                e
            }
        }
    }

    /// Index of the bin holding `v`; the last bin is closed on the right.
    pub fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
        let n = edges.len().checked_sub(1)?;
        if n == 0 || v < edges[0] || v > edges[n] {
            return None;
        }
        Some((0..n).find(|&i| v < edges[i + 1]).unwrap_or(n - 1))
    }

    fn validate(&self) -> Result<(), EvalError> {
        match self {
            DistanceBins::EqualWidth(0) | DistanceBins::Quantile(0) => Err(EvalError::InvalidSpec("bin count must be positive".into())),
            DistanceBins::Edges(e) if e.len() < 2 || e.windows(2).any(|w| !(w[0] < w[1])) => {
                Err(EvalError::InvalidSpec("bin edges must be at least two ascending values".into()))
            }
            _ => Ok(()),
        }
    }
}

fn default_ks() -> Vec<usize> {
    (1..=8).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    /// Numbers of comparables, each within `[1, 8]`.
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub distance_bins: DistanceBins,
    pub n_subjects: usize,
    pub seed: u64,
    #[serde(default)]
    pub desiderata: DesiderataConfig,
    #[serde(default)]
    pub sampling: LocalSampling,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.methods.is_empty() {
            return Err(EvalError::InvalidSpec("at least one method is required".into()));
        }
        if self.ks.is_empty() || self.ks.iter().any(|k| !(1..=8).contains(k)) {
            return Err(EvalError::InvalidSpec("numbers of comparables must lie in [1, 8]".into()));
        }
        if self.n_subjects == 0 {
            return Err(EvalError::InvalidSpec("n_subjects must be positive".into()));
        }
        self.distance_bins.validate()?;
        self.desiderata
            .validate()
            .map_err(|e| EvalError::InvalidSpec(e.to_string()))
    }
}

/// One method run on one subject with one number of comparables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub subject: usize,
    pub k: usize,
    pub method: Method,
    pub mean_distance: f64,
    /// `|estimate from actual values − subject's actual value|`
    pub prediction_error: f64,
    /// `|estimate from AI predictions − subject's AI prediction|`
    pub unfaithfulness: f64,
    pub bounds_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NumberOfComparables,
    AverageDistance,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::NumberOfComparables => "k",
            Axis::AverageDistance => "distance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

impl MetricSummary {
    fn of(xs: &[f64]) -> Self {
        let (mean, std) = mean_std(xs);
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: Method,
    pub axis: Axis,
    /// `k`, or the midpoint of the distance bin.
    pub axis_value: f64,
    /// Distance bin edges, for the distance axis.
    pub bin: Option<(f64, f64)>,
    pub n: usize,
    pub prediction_error: MetricSummary,
    pub unfaithfulness: MetricSummary,
    pub bounds_width: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub seed: u64,
    pub subjects: Vec<usize>,
    pub cells: Vec<ReportCell>,
    pub records: Vec<CaseRecord>,
}

fn cell(method: Method, axis: Axis, axis_value: f64, bin: Option<(f64, f64)>, recs: &[&CaseRecord]) -> ReportCell {
    let col = |f: fn(&CaseRecord) -> f64| recs.iter().map(|r| f(r)).collect::<Vec<_>>();
    ReportCell {
        method,
        axis,
        axis_value,
        bin,
        n: recs.len(),
        prediction_error: MetricSummary::of(&col(|r| r.prediction_error)),
        unfaithfulness: MetricSummary::of(&col(|r| r.unfaithfulness)),
        bounds_width: MetricSummary::of(&col(|r| r.bounds_width)),
    }
}

/// Groups records by method and each axis. Empty cells are omitted.
pub fn aggregate(records: &[CaseRecord], methods: &[Method], ks: &[usize], bins: &DistanceBins) -> Vec<ReportCell> {
    let mut cells = Vec::new();
    let distances: Vec<f64> = records.iter().map(|r| r.mean_distance).collect();
    let edges = if distances.is_empty() { Vec::new() } else { bins.edges(&distances) };
    for &method in methods {
        for &k in ks {
            let recs: Vec<&CaseRecord> = records.iter().filter(|r| r.method == method && r.k == k).collect();
            if !recs.is_empty() {
                cells.push(cell(method, Axis::NumberOfComparables, k as f64, None, &recs));
            }
        }
        for b in 0..edges.len().saturating_sub(1) {
            let recs: Vec<&CaseRecord> = records
                .iter()
                .filter(|r| r.method == method && DistanceBins::bin_of(&edges, r.mean_distance) == Some(b))
                .collect();
            if !recs.is_empty() {
                let (lo, hi) = (edges[b], edges[b + 1]);
                cells.push(cell(method, Axis::AverageDistance, 0.5 * (lo + hi), Some((lo, hi)), &recs));
            }
        }
    }
    cells
}

/// Runs every requested method for sampled subjects and numbers of comparables.
///
/// Subjects are dataset rows drawn without replacement by `spec.seed` and
/// excluded from their own comparables. Each subject's comparables are
/// selected once for the largest `k`; smaller `k` use the nearest prefix.
pub fn run_sweep(ctx: &ExplainContext, spec: &SweepSpec) -> Result<EvalReport, EvalError> {
    spec.validate()?;
    let n = ctx.dataset.len();
    let k_max = *spec.ks.iter().max().expect("validated nonempty");
    if spec.n_subjects > n || k_max >= n {
        return Err(EvalError::InvalidSpec(format!(
            "{} subjects with up to {k_max} comparables need more than {n} rows",
            spec.n_subjects
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let subjects: Vec<usize> = sample(&mut rng, n, spec.n_subjects).into_vec();
    let std = &ctx.standardizer;
    let per_subject: Vec<Vec<CaseRecord>> = subjects
        .par_iter()
        .map(|&row| -> Result<Vec<CaseRecord>, EvalError> {
            let r = &ctx.dataset.rows[row];
            let full = ctx.comparable_set(&r.instance, Some(row), k_max)?;
            let artifacts = methods::artifacts_for(
                &spec.methods,
                ctx.predictor(),
                std.layout(),
                &full,
                std.target_scale(),
                &spec.desiderata,
                spec.sampling,
                derive_seed(spec.seed, row as u64),
                true,
            )?;
            let mut out = Vec::with_capacity(spec.ks.len() * spec.methods.len());
            for &k in &spec.ks {
                let set = full.prefix(k);
                for &method in &spec.methods {
                    let actual = methods::estimate(method, &set, ValueChannel::Actual, &artifacts)?;
                    let pred = methods::estimate(method, &set, ValueChannel::Prediction, &artifacts)?;
                    out.push(CaseRecord {
                        subject: row,
                        k,
                        method,
                        mean_distance: set.mean_distance(),
                        prediction_error: (actual.point_estimate - r.actual).abs(),
                        unfaithfulness: (pred.point_estimate - set.subject_prediction).abs(),
                        bounds_width: actual.bounds.width(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let records: Vec<CaseRecord> = per_subject.into_iter().flatten().collect();
    let cells = aggregate(&records, &spec.methods, &spec.ks, &spec.distance_bins);
    Ok(EvalReport {
        version: EVAL_REPORT_VERSION,
        seed: spec.seed,
        subjects,
        cells,
        records,
    })
}

impl EvalReport {
    pub fn cell(&self, method: Method, axis: Axis, axis_value: f64) -> Option<&ReportCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.axis == axis && c.axis_value == axis_value)
    }

    /// Long format: one line per (method, axis value, metric).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), EvalError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "axis", "axis_value", "metric", "value", "std", "n", "seed"])?;
        for c in &self.cells {
            for (metric, s) in [
                ("prediction_error", c.prediction_error),
                ("unfaithfulness", c.unfaithfulness),
                ("bounds_width", c.bounds_width),
            ] {
                w.write_record([
                    c.method.as_str().to_string(),
                    c.axis.as_str().to_string(),
                    c.axis_value.to_string(),
                    metric.to_string(),
                    s.mean.to_string(),
                    s.std.to_string(),
                    c.n.to_string(),
                    self.seed.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width text table of the number-of-comparables axis.
    pub fn summary_table(&self) -> String {
        let mut s = format!("{:<14} {:>4} {:>14} {:>14} {:>14} {:>5}\n", "method", "k", "pred_error", "unfaithful", "width", "n");
        for c in self.cells.iter().filter(|c| c.axis == Axis::NumberOfComparables) {
            s.push_str(&format!(
                "{:<14} {:>4} {:>14.6} {:>14.6} {:>14.6} {:>5}\n",
                c.method.as_str(),
                c.axis_value,
                c.prediction_error.mean,
                c.unfaithfulness.mean,
                c.bounds_width.mean,
                c.n
            ));
        }
        s
    }
}
