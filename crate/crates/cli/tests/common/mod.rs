#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

pub fn cxai() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cxai"));
    cmd.env_remove("COMPARABLES_PREDICTOR_URL");
    cmd
}

pub fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn cxai")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn houses_args() -> Vec<String> {
    vec![
        "--dataset".into(),
        repo_path("data/houses.csv").display().to_string(),
        "--schema".into(),
        repo_path("data/houses.schema.json").display().to_string(),
    ]
}

/// Two-attribute toy dataset written into `dir`; returns (csv, schema).
pub fn toy_files(dir: &Path, csv: &str) -> (PathBuf, PathBuf) {
    let schema = json!({
        "attributes": [
            {"name": "area", "kind": {"numeric": {"unit": "ksqft"}}},
            {"name": "view", "kind": {"categorical": {"levels": ["none", "lake"]}}}
        ],
        "target_name": "price",
        "target_unit": "USD"
    });
    let csv_path = dir.join("toy.csv");
    let schema_path = dir.join("toy.schema.json");
    std::fs::write(&csv_path, csv).unwrap();
    std::fs::write(&schema_path, schema.to_string()).unwrap();
    (csv_path, schema_path)
}

/// HTTP model answering `{"inputs"}` with `100 + Σ (i+1)·x_i`, after `delay`.
pub struct MockPredictor {
    pub url: String,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockPredictor {
    pub fn start(delay: Duration) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                let app = Router::new().route(
                    "/predict",
                    post(move |Json(body): Json<Value>| async move {
                        tokio::time::sleep(delay).await;
                        let preds: Vec<f64> = body["inputs"]
                            .as_array()
                            .unwrap()
                            .iter()
                            .map(|x| {
                                let x = x.as_array().unwrap();
                                100.0 + x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v.as_f64().unwrap()).sum::<f64>()
                            })
                            .collect();
                        Json(json!({"predictions": preds}))
                    }),
                );
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stopped.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            url: format!("http://{addr}/predict"),
            stop: Some(stop),
            thread: Some(thread),
        }
    }
}

impl Drop for MockPredictor {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// A running `cxai serve`; killed on drop unless already waited on.
pub struct Server {
    pub child: Child,
    pub base: String,
}

impl Server {
    pub fn start(cmd: &mut Command) -> Self {
        let mut child = cmd
            .args(["--port", "0", "-q"])
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let v: Value = serde_json::from_str(&line).unwrap_or_else(|_| panic!("bad banner `{line}`"));
        Self {
            base: format!("http://{}", v["listening"].as_str().unwrap()),
            child,
        }
    }

    pub fn interrupt(&self) {
        unsafe {
            libc::kill(self.child.id() as libc::pid_t, libc::SIGINT);
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn post_json(url: &str, body: &Value) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.post(url).send_json(body).unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}

pub fn get(url: &str) -> (u16, String) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent.get(url).call().unwrap();
    (resp.status().as_u16(), resp.body_mut().read_to_string().unwrap())
}
