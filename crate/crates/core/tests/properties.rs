use cxai_core::baselines::{fit_regression, regression_estimate};
use cxai_core::comparables::{nearest, reconcile, similarities, uncertainty_bounds, Comparable, ComparableSet, ValueChannel};
use cxai_core::predictors::{predict_one, KnnRegressor, Predictor, SyntheticPredictor};
use cxai_core::schema::{AttributeDef, AttributeSchema, Dataset, FeatureLayout, Instance, Row, Standardizer, Value};
use cxai_core::trace::TraceParams;
use proptest::prelude::*;

const LEVELS: [&str; 3] = ["a", "b", "c"];

fn mixed_schema() -> AttributeSchema {
    AttributeSchema::new(
        vec![
            AttributeDef::numeric("x", "u"),
            AttributeDef::categorical("c", LEVELS),
            AttributeDef::numeric("y", "u"),
        ],
        "t",
        "",
    )
    .unwrap()
}

fn mixed_rows() -> impl Strategy<Value = Vec<(f64, usize, f64)>> {
    prop::collection::vec((-1e3..1e3f64, 0..3usize, -50.0..50.0f64), 3..20).prop_filter("spread", |rows| {
        let spread = |f: fn(&(f64, usize, f64)) -> f64| {
            let (lo, hi) = rows.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            hi - lo > 1e-3
        };
        spread(|r| r.0) && spread(|r| r.2)
    })
}

fn dataset(schema: &AttributeSchema, rows: &[(f64, usize, f64)]) -> Dataset {
    let rows = rows
        .iter()
        .enumerate()
        .map(|(i, &(x, c, y))| Row {
            instance: Instance::new(
                schema,
                vec![Value::Number(x), Value::Level(LEVELS[c].into()), Value::Number(y)],
                Some(format!("r{i}")),
            )
            .unwrap(),
            actual: x + y,
        })
        .collect();
    Dataset::new(schema.clone(), rows, "prop").unwrap()
}

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, d)
}

fn set_from(points: &[Vec<f64>], values: &[f64], subject: Vec<f64>) -> ComparableSet {
    let schema = AttributeSchema::new(
        (0..subject.len()).map(|j| AttributeDef::numeric(format!("a{j}"), "")).collect(),
        "t",
        "",
    )
    .unwrap();
    let inst = |x: &[f64]| Instance::new(&schema, x.iter().map(|v| Value::Number(*v)).collect(), None).unwrap();
    let layout = FeatureLayout::numeric(subject.len());
    let comparables = points
        .iter()
        .zip(values)
        .enumerate()
        .map(|(i, (x, &v))| Comparable {
            row: Some(i),
            instance: inst(x),
            encoded: x.clone(),
            actual_value: v,
            ai_prediction: v,
        })
        .collect();
    let distances = points.iter().map(|x| layout.distance(&subject, x)).collect();
    ComparableSet::new(inst(&subject), subject.clone(), 0.0, comparables, distances).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardizer_round_trips(rows in mixed_rows()) {
        let schema = mixed_schema();
        let ds = dataset(&schema, &rows);
        let std = Standardizer::fit(&ds).unwrap();
        for row in &ds.rows {
            let z = std.standardize(&row.instance).unwrap();
            let back = std.destandardize(&z).unwrap();
            for (a, b) in back.values.iter().zip(&row.instance.values) {
                match (a, b) {
                    (Value::Number(p), Value::Number(q)) => prop_assert!((p - q).abs() <= 1e-9 * q.abs().max(1.0)),
                    _ => prop_assert_eq!(a, b),
                }
            }
        }
    }

    #[test]
    fn standardized_numeric_columns_have_zero_mean_unit_variance(rows in mixed_rows()) {
        let schema = mixed_schema();
        let std = Standardizer::fit(&dataset(&schema, &rows)).unwrap();
        let z = std.standardize_dataset(&dataset(&schema, &rows)).unwrap();
        let n = z.len() as f64;
        for col in [0, 4] {
            let mean = z.iter().map(|r| r[col]).sum::<f64>() / n;
            let var = z.iter().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn distance_is_a_metric(a in vector(5), b in vector(5), c in vector(5)) {
        let layout = FeatureLayout::from_schema(&mixed_schema());
        let dist = |p: &[f64], q: &[f64]| layout.distance(p, q);
        prop_assert_eq!(dist(&a, &a), 0.0);
        prop_assert!(dist(&a, &b) >= 0.0);
        prop_assert!((dist(&a, &b) - dist(&b, &a)).abs() < 1e-12);
        prop_assert!(dist(&a, &c) <= dist(&a, &b) + dist(&b, &c) + 1e-9);
    }

    #[test]
    fn one_hot_mismatch_costs_one(x in -3.0..3.0f64, c1 in 0..3usize, c2 in 0..3usize) {
        let layout = FeatureLayout::from_schema(&mixed_schema());
        let enc = |c: usize| {
            let mut v = vec![x, 0.0, 0.0, 0.0, 0.0];
            v[1 + c] = 1.0;
            v
        };
        let expected = if c1 == c2 { 0.0 } else { 1.0 };
        prop_assert!((layout.distance(&enc(c1), &enc(c2)) - expected).abs() < 1e-12);
    }

    #[test]
    fn reconciliation_is_permutation_invariant(
        pairs in prop::collection::vec((-1e4..1e4f64, 0.0..10.0f64), 1..12),
        seed in any::<u64>(),
    ) {
        let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let sims = similarities(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let mut order: Vec<usize> = (0..values.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let pv: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let ps: Vec<f64> = order.iter().map(|&i| sims[i]).collect();
        let a = reconcile(&values, &sims);
        prop_assert!((a - reconcile(&pv, &ps)).abs() <= 1e-9 * a.abs().max(1.0));
        prop_assert_eq!(uncertainty_bounds(&values).unwrap(), uncertainty_bounds(&pv).unwrap());
        let b = uncertainty_bounds(&values).unwrap();
        prop_assert!(b.low - 1e-9 <= a && a <= b.high + 1e-9);
    }

    #[test]
    fn similarities_sum_to_one_and_fall_with_distance(ds in prop::collection::vec(0.0..10.0f64, 1..12)) {
        let s = similarities(&ds);
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..ds.len() {
            for j in 0..ds.len() {
                if ds[i] < ds[j] {
                    prop_assert!(s[i] >= s[j]);
                }
            }
        }
    }

    #[test]
    fn bounds_widen_with_k(values in prop::collection::vec(-1e5..1e5f64, 1..15)) {
        let mut last = 0.0;
        for k in 1..=values.len() {
            let w = uncertainty_bounds(&values[..k]).unwrap().width();
            prop_assert!(w >= last);
            last = w;
        }
    }

    #[test]
    fn nearest_is_sorted_and_excludes(pool in prop::collection::vec(vector(3), 2..20), subject in vector(3), k in 1usize..5) {
        let layout = FeatureLayout::numeric(3);
        let k = k.min(pool.len() - 1);
        let got = nearest(&layout, &pool, &subject, k, Some(0)).unwrap();
        prop_assert_eq!(got.len(), k);
        prop_assert!(got.iter().all(|&(i, _)| i != 0));
        prop_assert!(got.windows(2).all(|w| w[0].1 <= w[1].1));
        let worst = got[k - 1].1;
        let chosen: Vec<usize> = got.iter().map(|g| g.0).collect();
        for (i, x) in pool.iter().enumerate().skip(1) {
            if !chosen.contains(&i) {
                prop_assert!(layout.distance(&subject, x) >= worst);
            }
        }
    }

    #[test]
    fn batch_prediction_equals_single_calls(xs in prop::collection::vec(vector(2), 1..10), targets in prop::collection::vec(-100.0..100.0f64, 6)) {
        let knn = KnnRegressor::new(
            FeatureLayout::numeric(2),
            (0..6).map(|i| vec![i as f64, (i * i) as f64 / 5.0]).collect(),
            targets,
            3,
        )
        .unwrap();
        let sin = SyntheticPredictor::sinusoid_plus_linear(vec![1.0, 0.5], vec![2.0, 1.0], vec![1.0, -1.0], 3.0);
        for p in [&knn as &dyn Predictor, &sin] {
            let batch = p.predict(&xs).unwrap();
            for (x, b) in xs.iter().zip(&batch) {
                prop_assert_eq!(predict_one(p, x).unwrap(), *b);
            }
        }
    }

    #[test]
    fn knn_stays_within_target_range(x in vector(2), targets in prop::collection::vec(-100.0..100.0f64, 8), k in 1usize..8) {
        let points: Vec<Vec<f64>> = (0..8).map(|i| vec![(i % 3) as f64, (i / 3) as f64]).collect();
        let knn = KnnRegressor::new(FeatureLayout::numeric(2), points, targets.clone(), k).unwrap();
        let y = predict_one(&knn, &x).unwrap();
        let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo - 1e-9 <= y && y <= hi + 1e-9);
    }

    #[test]
    fn regression_is_affine_equivariant(
        points in prop::collection::vec(vector(2), 6..10),
        values in prop::collection::vec(-100.0..100.0f64, 10),
        subject in vector(2),
        a in 0.1..10.0f64,
        b in -1e3..1e3f64,
    ) {
        let values = &values[..points.len()];
        let base = set_from(&points, values, subject.clone());
        let moved: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        let shifted = set_from(&points, &moved, subject);
        let e0 = regression_estimate(&fit_regression(&base, ValueChannel::Actual), &base).unwrap();
        let e1 = regression_estimate(&fit_regression(&shifted, ValueChannel::Actual), &shifted).unwrap();
        let tol = 1e-5 * (a * e0.point_estimate.abs() + b.abs() + 1.0);
        prop_assert!((e1.point_estimate - (a * e0.point_estimate + b)).abs() < tol);
        prop_assert!((e1.bounds.low - (a * e0.bounds.low + b)).abs() < tol);
        prop_assert!((e1.bounds.high - (a * e0.bounds.high + b)).abs() < tol);
    }

    #[test]
    fn trace_is_pinned_continuous_and_telescopes(
        first in vector(3),
        last in vector(3),
        t in 1usize..6,
        theta_seed in prop::collection::vec(-3.0..3.0f64, 40),
        scale in 0.5..1e4f64,
        anchor in -1e4..1e4f64,
    ) {
        let params = TraceParams { first: first.clone(), last: last.clone(), segments: t, target_scale: scale };
        let theta: Vec<f64> = theta_seed.iter().cycle().take(params.len()).copied().collect();
        let m = params.model(&theta);
        prop_assert_eq!(&m.knots[0], &first);
        prop_assert_eq!(&m.knots[t], &last);
        for tau in 1..t {
            let left = m.segment_value(tau, &m.knots[tau]);
            let right = m.segment_value(tau + 1, &m.knots[tau]);
            prop_assert!((left - right).abs() < 1e-9 * left.abs().max(1.0));
        }
        let v = m.knot_values();
        let total: f64 = m.value_deltas().iter().sum();
        prop_assert!((total - (v[t] - v[0])).abs() < 1e-9 * v[t].abs().max(v[0].abs()).max(1.0));
        prop_assert!((m.adjusted_value(anchor) - (anchor + total * scale)).abs() < 1e-9 * (anchor.abs() + (total * scale).abs()).max(1.0));
        prop_assert!((m.value_at(1.0) - v[t] * scale).abs() < 1e-9 * (v[t] * scale).abs().max(1.0));
        prop_assert_eq!(params.flatten(&m), theta);
    }
}
