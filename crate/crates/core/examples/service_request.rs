//! Exercise the HTTP API in-process: fetch the catalog and the default mask,
//! then post a try-on request with an edited mask.
//!
//! cargo run --release --example service_request

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use tryon::config::TrainingConfig;
use tryon::data::{gen_dataset, GenOptions, Split};
use tryon::pipeline::Pipeline;
use tryon::service::{router, ServiceState};
use tryon::wearing_guide::MaskWire;

async fn send(app: &axum::Router, req: Request<Body>) -> (u16, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

#[tokio::main(flavor = "current_thread")]
async fn main() -> tryon::Result<()> {
    let cfg = TrainingConfig::default();
    let data = std::env::temp_dir().join("tryon_service_data");
    let m = gen_dataset(
        &GenOptions {
            count: 4,
            resolution: cfg.resolution,
            seed: 12,
            split: Split::TestPair,
        },
        &data,
    )?;
    let app = router(Arc::new(ServiceState::new(Pipeline::initialized(&cfg)?, m)?));

    let (_, catalog) = send(&app, Request::get("/catalog").body(Body::empty()).unwrap()).await;
    println!("catalog: {} models, {} tops, {} bottoms", catalog["models"].as_array().unwrap().len(),
        catalog["tops"].as_array().unwrap().len(), catalog["bottoms"].as_array().unwrap().len());

    let (_, mask) = send(&app, Request::get("/mask/default?model_id=s00001").body(Body::empty()).unwrap()).await;
    println!("default mask: {mask}");
    let MaskWire::Hem { hem_row } = serde_json::from_value(mask).unwrap() else {
        unreachable!("default masks are hem masks")
    };

    let body = json!({
        "model_id": "s00001",
        "top_id": "s00002",
        "bottom_id": "s00003",
        "mask": MaskWire::Hem { hem_row: hem_row + 5 },
        "want_intermediates": true,
    });
    let req = Request::post("/tryon")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, resp) = send(&app, req).await;
    println!(
        "POST /tryon -> {status}, final image {} base64 bytes, {:.1} ms",
        resp["final_image"].as_str().map_or(0, str::len),
        resp["timing_ms"].as_f64().unwrap_or(0.0)
    );

    let bad = json!({"model_id": "s00001", "top_id": "s00001", "mask": {"type": "hem", "hem_row": 500}});
    let req = Request::post("/tryon")
        .header("content-type", "application/json")
        .body(Body::from(bad.to_string()))
        .unwrap();
    println!("out-of-range mask -> {:?}", send(&app, req).await);
    Ok(())
}
