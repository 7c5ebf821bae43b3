mod common;

use std::time::{Duration, Instant};

use common::*;
use serde_json::{json, Value};

#[test]
fn comparables_k1_on_two_rows_is_the_other_row() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = toy_files(dir.path(), "area,view,price\n1.0,none,300000\n2.0,lake,520000\n");
    let out = run(cxai()
        .args(["explain", "--predictor", "knn:1", "--method", "comparables-only", "--k", "1", "--subject", "0", "-q"])
        .arg("--dataset")
        .arg(&csv)
        .arg("--schema")
        .arg(&schema));
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["estimate"]["point_estimate"], 520000.0);
    assert_eq!(doc["comparables"][0]["row"], 1);
    assert_eq!(doc["seed"], 0);
}

#[test]
fn unknown_method_exits_2_naming_valid_methods() {
    let out = run(cxai().arg("explain").args(houses_args()).args(["--predictor", "knn", "--subject", "0", "--method", "oracle"]));
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for m in ["comparables", "regression", "linear-adjust", "trace"] {
        assert!(err.contains(m), "{err}");
    }
}

#[test]
fn trace_explain_is_byte_identical_across_runs() {
    let args = |fmt: &str| {
        let mut v = vec!["explain".to_string()];
        v.extend(houses_args());
        v.extend(
            ["--predictor", "knn:5", "--subject", "KC1003", "--method", "trace", "--k", "2", "--seed", "7", "--format", fmt, "-q"]
                .map(String::from),
        );
        v
    };
    for fmt in ["json", "csv"] {
        let a = run(cxai().args(args(fmt)));
        let b = run(cxai().args(args(fmt)));
        assert!(a.status.success(), "{}", stderr(&a));
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{fmt}");
    }
}

#[test]
fn inline_subject_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.json");
    let out = run(cxai()
        .arg("explain")
        .args(houses_args())
        .args(["--predictor", "knn", "--method", "linear-adjust", "--k", "3", "-q"])
        .args([
            "--values",
            "bedrooms=3,bathrooms=2,living_area=2.0,lot_area=7.5,floors=1,waterfront=no,condition=3,year_built=1980",
        ])
        .arg("--out")
        .arg(&path));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(doc["subject"]["actual_value"].is_null());
    assert_eq!(doc["detail"]["kind"], "linear_adjust");
}

#[test]
fn data_and_predictor_failures_have_their_own_codes() {
    let out = run(cxai().args(["explain", "--dataset", "/nonexistent.csv", "--predictor", "knn", "--subject", "0", "--method", "trace"])
        .arg("--schema")
        .arg(repo_path("data/houses.schema.json")));
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let out = run(cxai().arg("explain").args(houses_args()).args(["--predictor", "knn", "--subject", "nobody", "--method", "trace"]));
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let out = run(cxai().arg("explain").args(houses_args()).args(["--subject", "0", "--method", "trace"]));
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    // nothing listens on port 9
    let out = run(cxai()
        .arg("explain")
        .args(houses_args())
        .args(["--predictor", "http://127.0.0.1:9/predict", "--predictor-timeout", "2", "--subject", "0", "--method", "comparables"]));
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn remote_predictor_from_environment() {
    let mock = MockPredictor::start(Duration::ZERO);
    let out = run(cxai()
        .env("COMPARABLES_PREDICTOR_URL", &mock.url)
        .arg("explain")
        .args(houses_args())
        .args(["--subject", "KC1000", "--method", "regression", "--k", "4", "-q"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["subject"]["ai_prediction"].as_f64().unwrap().is_finite());
}

fn write_spec(dir: &std::path::Path, name: &str, spec: &Value) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(spec).unwrap()).unwrap();
    p
}

fn linear_task() -> Value {
    json!({"function": {"kind": "linear", "weights": [1.0, -0.5], "bias": 0.0}, "n_rows": 60, "seed": 1})
}

#[test]
fn evaluate_single_subject_writes_one_case_per_cell_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "eval.json",
        &json!({"task": linear_task(),
                "sweep": {"methods": ["comparables", "trace"], "ks": [1, 2], "n_subjects": 1, "seed": 4,
                          "desiderata": {"max_epochs": 200}}}),
    );
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let o = dir.path().join(name);
            let out = run(cxai().arg("evaluate").arg(&spec).arg("--out").arg(&o).args(["--format", "csv", "-q"]));
            assert!(out.status.success(), "{}", stderr(&out));
            (o, out.stdout)
        })
        .collect();
    let csv_a = std::fs::read_to_string(outs[0].0.join("report.csv")).unwrap();
    assert_eq!(csv_a, std::fs::read_to_string(outs[1].0.join("report.csv")).unwrap());
    assert_eq!(
        std::fs::read(outs[0].0.join("report.json")).unwrap(),
        std::fs::read(outs[1].0.join("report.json")).unwrap()
    );
    assert_eq!(outs[0].1, csv_a.as_bytes());

    let mut rdr = csv::Reader::from_reader(csv_a.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let n_col = headers.iter().position(|h| h == "n").unwrap();
    let seed_col = headers.iter().position(|h| h == "seed").unwrap();
    let axis_col = headers.iter().position(|h| h == "axis").unwrap();
    let mut k_rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[seed_col], "4");
        if &rec[axis_col] == "k" {
            assert_eq!(&rec[n_col], "1");
            k_rows += 1;
        }
    }
    // 2 methods x 2 ks x 3 metrics
    assert_eq!(k_rows, 12);

    let out = run(cxai().arg("evaluate").arg(&spec).arg("--out").arg(dir.path().join("c")).args(["--seed", "5", "--format", "json", "-q"]));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["seed"], 5);
}

#[test]
fn quadratic_spec_trace_is_more_faithful_than_linear_adjust() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(cxai()
        .arg("evaluate")
        .arg(repo_path("configs/evaluate-quadratic.json"))
        .arg("--out")
        .arg(dir.path())
        .args(["--format", "json", "-q"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let uf = |method: &str| {
        report["cells"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["method"] == method && c["axis"] == "number_of_comparables")
            .unwrap()["unfaithfulness"]["mean"]
            .as_f64()
            .unwrap()
    };
    assert!(uf("trace") < uf("linear-adjust"), "{} vs {}", uf("trace"), uf("linear-adjust"));
}

#[test]
fn sensitivity_rows_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "s.json",
        &json!({"task": linear_task(),
                "sensitivity": {"vary": "sparsity", "values": [0.0, 10.0, 100.0], "seeds": [0, 1],
                                "base": {"max_epochs": 200}}}),
    );
    let out = run(cxai().arg("sensitivity").arg(&spec).arg("--out").arg(dir.path()).args(["--format", "csv", "-q"]));
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("sensitivity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
    assert_eq!(out.stdout, csv.as_bytes());

    let empty = write_spec(
        dir.path(),
        "empty.json",
        &json!({"task": linear_task(), "sensitivity": {"vary": "sparsity", "values": [], "seeds": [0]}}),
    );
    let out = run(cxai().arg("sensitivity").arg(&empty).arg("--out").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let out = run(cxai().arg("sensitivity").arg(dir.path().join("missing.json")));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_sensitivity_defaults_run_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(cxai().arg("sensitivity").arg(repo_path("configs/sensitivity-defaults.json")).arg("--out").arg(dir.path()).arg("-q"));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("sparsity"));
}

#[test]
fn serve_answers_health_and_rejects_missing_remote_url() {
    let server = Server::start(cxai().arg("serve").args(houses_args()).args(["--predictor", "knn"]));
    let (status, body) = get(&format!("{}/health", server.base));
    assert_eq!(status, 200);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["status"], "ok");

    let out = run(cxai().arg("serve").args(houses_args()).args(["--predictor", "remote", "--port", "0"]));
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn serve_bind_failure_exits_5() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = run(cxai().arg("serve").args(houses_args()).args(["--predictor", "knn", "--port", &port]));
    assert_eq!(out.status.code(), Some(5), "{}", stderr(&out));
}

#[test]
fn sigint_drains_in_flight_request() {
    let mock = MockPredictor::start(Duration::from_millis(400));
    let mut server = Server::start(cxai().arg("serve").args(houses_args()).args(["--predictor", &mock.url]));
    let url = format!("{}/explain", server.base);
    let request = std::thread::spawn(move || {
        post_json(&url, &json!({"dataset": "houses", "subject": "KC1002", "method": "comparables", "k": 2}))
    });
    std::thread::sleep(Duration::from_millis(200));
    let started = Instant::now();
    server.interrupt();
    let (status, body) = request.join().unwrap();
    assert_eq!(status, 200, "{body}");
    let doc: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(doc["comparables"].as_array().unwrap().len(), 2);

    let deadline = Instant::now() + Duration::from_secs(20);
    let code = loop {
        if let Some(s) = server.child.try_wait().unwrap() {
            break s.code();
        }
        assert!(Instant::now() < deadline, "server did not stop");
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(code, Some(0));
    assert!(started.elapsed() < Duration::from_secs(20));
}
