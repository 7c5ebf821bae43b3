use serde::{Deserialize, Serialize};

use super::{TraceError, TraceModel};
use crate::comparables::{reconciled, Comparable, ComparableSet, Method, ReconciledEstimate, ValueChannel};
use crate::schema::{BlockKind, FeatureBlock, Instance, Standardizer, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeChange {
    pub attribute: String,
    pub from: Value,
    pub to: Value,
}

/// One leg of a trace as shown to a user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub changed_attributes: Vec<AttributeChange>,
    pub money_delta: f64,
    pub running_value: f64,
    /// Attribute values of the hypothetical instance reached by this step.
    pub state: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSteps {
    pub anchor: ValueChannel,
    pub anchor_value: f64,
    pub steps: Vec<Step>,
    pub adjusted_value: f64,
}

/// Position of a one-hot block along the comparable-to-subject segment.
fn level_progress(block: &FeatureBlock, knot: &[f64], first: &[f64], last: &[f64]) -> f64 {
    let cols = block.columns();
    let dd: f64 = cols.clone().map(|c| (last[c] - first[c]).powi(2)).sum();
    if dd == 0.0 {
        return 0.0;
    }
    cols.map(|c| (knot[c] - first[c]) * (last[c] - first[c])).sum::<f64>() / dd
}

/// For each attribute, the steps (1-based) at which it is reported as changing.
fn change_steps(m: &TraceModel, std: &Standardizer, comparable: &Instance, subject: &Instance, delta: f64) -> Vec<Vec<usize>> {
    let t = m.segments();
    let first = &m.knots[0];
    let last = &m.knots[t];
    std.layout()
        .blocks()
        .iter()
        .enumerate()
        .map(|(r, block)| {
            let differs = comparable.values[r] != subject.values[r];
            let mut at: Vec<usize> = match block.kind {
                BlockKind::Numeric => (1..=t)
                    .filter(|&tau| (m.knots[tau][block.start] - m.knots[tau - 1][block.start]).abs() > delta)
                    .collect(),
                BlockKind::Categorical if differs => {
                    let progress: Vec<f64> = m.knots.iter().map(|k| level_progress(block, k, first, last)).collect();
                    let switch = (1..=t).rev().find(|&tau| progress[tau - 1] < 0.5 && progress[tau] >= 0.5);
                    switch.into_iter().collect()
                }
                BlockKind::Categorical => Vec::new(),
            };
            if differs && at.is_empty() {
                at.push(t);
            }
            at
        })
        .collect()
}

/// Turns a trained trace into human-readable steps.
///
/// Attributes moving by no more than `delta` within a segment are reported as
/// unchanged there. Each attribute's last reported change lands exactly on
/// the subject's value, and running values accumulate the trace's value
/// deltas on top of the chosen anchor.
pub fn extract_steps(
    m: &TraceModel,
    comparable: &Comparable,
    subject: &Instance,
    std: &Standardizer,
    delta: f64,
    anchor: ValueChannel,
) -> Result<TraceSteps, TraceError> {
    if m.dim() != std.dim() {
        return Err(TraceError::DimensionMismatch {
            expected: std.dim(),
            got: m.dim(),
        });
    }
    let schema = std.schema();
    let plan = change_steps(m, std, &comparable.instance, subject, delta);
    let deltas = m.value_deltas();
    let anchor_value = comparable.value(anchor);
    let mut state = comparable.instance.values.clone();
    let mut running = anchor_value;
    let mut steps = Vec::with_capacity(m.segments());
    for tau in 1..=m.segments() {
        let mut changed = Vec::new();
        for (r, at) in plan.iter().enumerate() {
            if !at.contains(&tau) {
                continue;
            }
            let to = if Some(&tau) == at.last() {
                subject.values[r].clone()
            } else {
                std.raw_value(r, &m.knots[tau])
            };
            changed.push(AttributeChange {
                attribute: schema.attributes[r].name.clone(),
                from: std::mem::replace(&mut state[r], to.clone()),
                to,
            });
        }
        let money_delta = deltas[tau - 1] * m.target_scale;
        running += money_delta;
        steps.push(Step {
            changed_attributes: changed,
            money_delta,
            running_value: running,
            state: state.clone(),
        });
    }
    Ok(TraceSteps {
        anchor,
        anchor_value,
        steps,
        adjusted_value: running,
    })
}

/// Averages the comparables' trace-adjusted values with their similarities.
pub fn trace_adjusted_estimate(
    traces: &[TraceModel],
    set: &ComparableSet,
    channel: ValueChannel,
) -> Result<ReconciledEstimate, TraceError> {
    if traces.len() != set.len() {
        return Err(TraceError::DimensionMismatch {
            expected: set.len(),
            got: traces.len(),
        });
    }
    let values: Vec<f64> = traces
        .iter()
        .zip(&set.comparables)
        .map(|(m, c)| m.adjusted_value(c.value(channel)))
        .collect();
    Ok(reconciled(Method::TraceAdjustments, &values, &set.similarities))
}
