use cxai_core::evaluation::{run_sensitivity, LambdaKind, SensitivityPair, SensitivitySpec, SyntheticTask};
use cxai_core::predictors::SyntheticPredictor;
use cxai_core::trace::{DesiderataConfig, TraceModel};

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

fn flips(signs: &[i8]) -> usize {
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Brute-force counts from the stored knots of an all-numeric trace:
/// (adjustments, reversals, unevenness in target units squared).
fn recount(m: &TraceModel, delta: f64) -> (usize, usize, f64) {
    let t = m.segments();
    let mut adjustments = 0;
    let mut reversals = 0;
    for j in 0..m.dim() {
        let moves: Vec<f64> = (1..=t).map(|tau| m.knots[tau][j] - m.knots[tau - 1][j]).collect();
        let big: Vec<i8> = moves.iter().filter(|x| x.abs() > delta).map(|x| sign(*x)).collect();
        adjustments += big.len();
        reversals += flips(&big);
    }
    let v = m.knot_values();
    let steps: Vec<f64> = v.windows(2).map(|p| (p[1] - p[0]) * m.target_scale).collect();
    let big: Vec<i8> = steps.iter().filter(|x| x.abs() > delta * m.target_scale).map(|x| sign(*x)).collect();
    reversals += flips(&big);
    let mean = steps.iter().sum::<f64>() / t as f64;
    let unevenness = steps.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t as f64;
    (adjustments, reversals, unevenness)
}

#[test]
fn reported_counts_match_recount_of_stored_knots() {
    let ctx = SyntheticTask::new(
        SyntheticPredictor::sinusoid_plus_linear(vec![1.0; 3], vec![2.0; 3], vec![1.0; 3], 0.0),
        120,
        3,
    )
    .build()
    .unwrap();
    for vary in [LambdaKind::Sparsity, LambdaKind::Evenness, LambdaKind::Monotonicity] {
        let spec = SensitivitySpec {
            base: DesiderataConfig {
                max_epochs: 150,
                ..Default::default()
            },
            vary,
            values: vec![0.0, 1.0, 100.0],
            seeds: vec![0, 1, 2, 3],
            pair: SensitivityPair::Sampled { rank: 5 },
        };
        let report = run_sensitivity(&ctx, &spec).unwrap();
        let delta = report.base.delta;
        for row in &report.rows {
            let (adjustments, reversals, unevenness) = recount(&row.trace, delta);
            assert_eq!(row.adjustments, adjustments, "{vary:?} {row:?}");
            assert_eq!(row.reversals, reversals, "{vary:?} seed {}", row.seed);
            assert!((row.unevenness - unevenness).abs() <= 1e-9 * unevenness.max(1e-12), "{vary:?}");
        }
        for s in &report.summary {
            let mine: Vec<_> = report.rows.iter().filter(|r| r.value == s.value).collect();
            let mean = mine.iter().map(|r| r.adjustments as f64).sum::<f64>() / mine.len() as f64;
            assert_eq!(s.n, 4);
            assert!((s.adjustments.0 - mean).abs() < 1e-12);
        }
    }
}
