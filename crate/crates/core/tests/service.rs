use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use tryon::config::TrainingConfig;
use tryon::data::{gen_dataset, DatasetManifest, GenOptions, Resolution, Split};
use tryon::pipeline::Pipeline;
use tryon::service::{router, ErrorBody, ServiceState, TryOnResponse};
use tryon::wearing_guide::{encode_rle, HemMask, MaskWire};

fn setup() -> (tempfile::TempDir, Router, DatasetManifest) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainingConfig::default();
    let m = gen_dataset(
        &GenOptions {
            count: 3,
            resolution: cfg.resolution,
            seed: 4,
            split: Split::TestPair,
        },
        dir.path(),
    )
    .unwrap();
    let state = ServiceState::new(Pipeline::initialized(&cfg).unwrap(), m.clone()).unwrap();
    (dir, router(Arc::new(state)), m)
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(body: &Value) -> Request<Body> {
    Request::post("/tryon")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

fn request(mask: MaskWire, want: bool) -> Value {
    json!({
        "model_id": "s00001",
        "top_id": "s00001",
        "bottom_id": "s00001",
        "mask": mask,
        "want_intermediates": want,
    })
}

#[tokio::test]
async fn health_and_catalog() {
    let (_d, app, _) = setup();
    let (s, v) = call(&app, get("/healthz")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, json!({"status": "ok"}));

    let (s, v) = call(&app, get("/catalog")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["resolution"], "64x48");
    assert_eq!(v["models"].as_array().unwrap().len(), 3);
    assert_eq!(v["models"][1]["thumbnail"], "models/s00001.png");
    // Sample 0 wears a dress, so only two bottoms exist.
    assert_eq!(v["tops"].as_array().unwrap().len(), 3);
    assert_eq!(v["bottoms"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn default_mask_matches_ground_truth_hem() {
    let (_d, app, m) = setup();
    let (s, v) = call(&app, get("/mask/default?model_id=s00001")).await;
    assert_eq!(s, StatusCode::OK);
    let wire: MaskWire = serde_json::from_value(v).unwrap();
    let sample = tryon::data::load_sample(&m, "s00001").unwrap();
    let hem = tryon::wearing_guide::build_wearing_guide(&sample.parsing).unwrap();
    assert_eq!(wire, MaskWire::from_hem(hem));

    let (s, v) = call(&app, get("/mask/default?model_id=nobody")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "UnknownId");
}

#[tokio::test]
async fn tryon_is_deterministic_and_returns_pngs() {
    let (_d, app, _) = setup();
    let body = request(MaskWire::Hem { hem_row: 30 }, true);
    let (s1, v1) = call(&app, post(&body)).await;
    let (s2, v2) = call(&app, post(&body)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    let r1: TryOnResponse = serde_json::from_value(v1).unwrap();
    let r2: TryOnResponse = serde_json::from_value(v2).unwrap();
    assert_eq!(r1.final_image, r2.final_image);
    assert!(r1.timing_ms >= 0.0);
    for img in [&r1.final_image, r1.parsing.as_ref().unwrap(), r1.warped_top.as_ref().unwrap()] {
        let bytes = BASE64.decode(img).unwrap();
        assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    }

    let (s, v) = call(&app, post(&request(MaskWire::Hem { hem_row: 30 }, false))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.get("parsing").is_none() && v.get("timing_ms").is_some());
}

#[tokio::test]
async fn mask_errors_are_client_errors() {
    let (_d, app, _) = setup();
    let small = HemMask::new(Resolution::new(32, 24).unwrap(), 10).unwrap().to_mask();
    let (s, v) = call(&app, post(&request(MaskWire::from_mask(&small), false))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let e: ErrorBody = serde_json::from_value(v).unwrap();
    assert_eq!(e.error, "DimensionError");
    assert!(e.message.contains("32x24"));

    let (s, v) = call(&app, post(&request(MaskWire::Hem { hem_row: 64 }, false))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "DimensionError");

    let bits = vec![true; 64 * 48];
    let wire = MaskWire::Rle {
        height: 64,
        width: 48,
        runs: encode_rle(&bits),
    };
    let (s, _) = call(&app, post(&request(wire, false))).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let (_d, app, _) = setup();
    let mut body = request(MaskWire::Hem { hem_row: 30 }, false);
    body["top_id"] = json!("t-missing");
    let (s, v) = call(&app, post(&body)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "UnknownId");
    let mut body = request(MaskWire::Hem { hem_row: 30 }, false);
    body["model_id"] = json!("m-missing");
    assert_eq!(call(&app, post(&body)).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn inference_failure_is_a_server_error() {
    let (dir, app, _) = setup();
    // A corrupt model image makes inference fail after validation.
    std::fs::write(dir.path().join("models/s00002.png"), b"not a png").unwrap();
    let mut body = request(MaskWire::Hem { hem_row: 30 }, false);
    body["model_id"] = json!("s00002");
    let (s, v) = call(&app, post(&body)).await;
    assert_eq!(s, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(v["error"], "CorruptFile");
}
