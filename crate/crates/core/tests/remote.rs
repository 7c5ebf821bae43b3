use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use cxai_core::predictors::{PredictError, Predictor, RemotePredictor};
use serde_json::{json, Value};

/// Per-route hit counters; `/flaky` fails its first two calls with 503.
#[derive(Default)]
struct Hits {
    flaky: AtomicUsize,
    broken: AtomicUsize,
}

fn sums(body: &Value) -> Vec<f64> {
    body["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum())
        .collect()
}

async fn handle(State(hits): State<Arc<Hits>>, Path(mode): Path<String>, Json(body): Json<Value>) -> Response {
    match mode.as_str() {
        "sum" => Json(json!({"predictions": sums(&body)})).into_response(),
        "flaky" => {
            if hits.flaky.fetch_add(1, Ordering::SeqCst) < 2 {
                StatusCode::SERVICE_UNAVAILABLE.into_response()
            } else {
                Json(json!({"predictions": sums(&body)})).into_response()
            }
        }
        "broken" => {
            hits.broken.fetch_add(1, Ordering::SeqCst);
            StatusCode::INTERNAL_SERVER_ERROR.into_response()
        }
        "reject" => (StatusCode::UNPROCESSABLE_ENTITY, "bad inputs").into_response(),
        "short" => Json(json!({"predictions": [1.0]})).into_response(),
        "nan" => (StatusCode::OK, [("content-type", "application/json")], "{\"predictions\": [1.0, null]}").into_response(),
        "slow" => {
            tokio::time::sleep(Duration::from_secs(3)).await;
            Json(json!({"predictions": sums(&body)})).into_response()
        }
        _ => StatusCode::NOT_FOUND.into_response(),
    }
}

fn start() -> (SocketAddr, Arc<Hits>) {
    let hits = Arc::new(Hits::default());
    let app = Router::new().route("/{mode}", post(handle)).with_state(hits.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (rx.recv().unwrap(), hits)
}

fn client(addr: SocketAddr, mode: &str, retries: u32) -> RemotePredictor {
    RemotePredictor::new(format!("http://{addr}/{mode}"), 2, Duration::from_secs(1), retries)
}

#[test]
fn remote_predictor_contract() {
    let (addr, hits) = start();
    let xs = vec![vec![1.0, 2.0], vec![-0.5, 0.25]];

    assert_eq!(client(addr, "sum", 0).predict(&xs).unwrap(), vec![3.0, -0.25]);
    assert_eq!(client(addr, "sum", 0).predict(&[]).unwrap(), Vec::<f64>::new());
    assert_eq!(
        client(addr, "sum", 0).predict(&[vec![1.0]]),
        Err(PredictError::DimensionMismatch { expected: 2, got: 1 })
    );

    // two 503s, then success within a budget of two retries
    assert_eq!(client(addr, "flaky", 2).predict(&xs).unwrap(), vec![3.0, -0.25]);
    assert_eq!(hits.flaky.load(Ordering::SeqCst), 3);

    match client(addr, "broken", 1).predict(&xs) {
        Err(PredictError::RemoteUnavailable { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("{other:?}"),
    }
    assert_eq!(hits.broken.load(Ordering::SeqCst), 2);

    for mode in ["reject", "short", "nan"] {
        let got = client(addr, mode, 3).predict(&xs);
        assert!(matches!(got, Err(PredictError::BadResponse(_)) | Err(PredictError::NonFinite)), "{mode}: {got:?}");
    }

    match client(addr, "slow", 0).predict(&xs) {
        Err(PredictError::RemoteUnavailable { attempts: 1, .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn unreachable_host_is_unavailable() {
    // port 9 (discard) is closed on loopback
    let p = RemotePredictor::new("http://127.0.0.1:9/predict", 1, Duration::from_millis(500), 1);
    assert!(matches!(p.predict(&[vec![0.0]]), Err(PredictError::RemoteUnavailable { attempts: 2, .. })));
}
