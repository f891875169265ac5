//! HTTP try-on service over one immutable checkpoint set.

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::data::io::{label_png_bytes, png_bytes};
use crate::data::{load_garment, load_sample, CompactSample, DatasetManifest, GarmentKind, GarmentRecord};
use crate::error::{Error, Result};
use crate::pipeline::{full_pipeline_infer, Pipeline, TryOnInputs};
use crate::wearing_guide::{build_wearing_guide, validate_mask, MaskWire};

pub struct ServiceState {
    pub pipeline: Pipeline,
    pub manifest: DatasetManifest,
}

impl ServiceState {
    pub fn new(pipeline: Pipeline, manifest: DatasetManifest) -> Result<Self> {
        if pipeline.res != manifest.resolution {
            return Err(Error::SchemaMismatch(format!(
                "models are {}, catalog is {}",
                pipeline.res, manifest.resolution
            )));
        }
        Ok(Self { pipeline, manifest })
    }

    /// Load checkpoints from `ckpt_dir` and the catalog from the manifest at
    /// `data` (a file or a dataset directory).
    pub fn load(ckpt_dir: &Path, data: &Path) -> Result<Self> {
        Self::new(Pipeline::load_dir(ckpt_dir)?, DatasetManifest::load(data)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub id: String,
    /// Path of the image relative to the dataset root.
    pub thumbnail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub resolution: String,
    pub models: Vec<CatalogItem>,
    pub tops: Vec<CatalogItem>,
    pub bottoms: Vec<CatalogItem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TryOnRequest {
    pub model_id: String,
    pub top_id: String,
    /// Absent for dresses.
    #[serde(default)]
    pub bottom_id: Option<String>,
    pub mask: MaskWire,
    #[serde(default)]
    pub want_intermediates: bool,
}

/// Images are base64-encoded PNGs; `parsing` is a label PNG.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TryOnResponse {
    pub final_image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parsing: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warped_top: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warped_bottom: Option<String>,
    pub timing_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

/// Mask validation errors are the client's; unknown ids are 404; anything
/// else is an inference failure.
pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::DimensionError { .. } | Error::NonBinaryError { .. } | Error::ShapeMismatch(_) => StatusCode::BAD_REQUEST,
        Error::UnknownId(_) => StatusCode::NOT_FOUND,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.0.code().to_string(),
            message: self.0.to_string(),
        };
        (status_for(&self.0), Json(body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

fn rel(m: &DatasetManifest, p: &Path) -> String {
    p.strip_prefix(&m.root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

pub fn catalog(m: &DatasetManifest) -> Catalog {
    let tops: BTreeSet<&str> = m.samples.iter().map(|e| e.top_id.as_str()).collect();
    let bottoms: BTreeSet<&str> = m.samples.iter().filter_map(|e| e.bottom_id.as_deref()).collect();
    Catalog {
        resolution: m.resolution.to_string(),
        models: m
            .samples
            .iter()
            .map(|e| CatalogItem {
                id: e.id.clone(),
                thumbnail: rel(m, &m.model_path(&e.id)),
            })
            .collect(),
        tops: tops
            .into_iter()
            .map(|id| CatalogItem {
                id: id.to_string(),
                thumbnail: rel(m, &m.top_path(id)),
            })
            .collect(),
        bottoms: bottoms
            .into_iter()
            .map(|id| CatalogItem {
                id: id.to_string(),
                thumbnail: rel(m, &m.bottom_path(id)),
            })
            .collect(),
    }
}

/// Hem mask of the model's ground-truth parsing.
pub fn default_mask(m: &DatasetManifest, model_id: &str) -> Result<MaskWire> {
    let s = load_sample(m, model_id)?;
    Ok(MaskWire::from_hem(build_wearing_guide(&s.parsing)?))
}

/// Resolve ids, validate the mask and run the pipeline.
pub fn tryon(state: &ServiceState, req: &TryOnRequest) -> Result<TryOnResponse> {
    let start = Instant::now();
    let res = state.pipeline.res;
    let mask = req.mask.to_mask(res)?;
    validate_mask(&mask, res)?;
    let m = &state.manifest;
    let model = CompactSample::from(load_sample(m, &req.model_id)?);
    let top = load_garment(m, GarmentKind::Top, &req.top_id)?;
    let bottom = match &req.bottom_id {
        Some(id) => load_garment(m, GarmentKind::Bottom, id)?,
        None => GarmentRecord::absent(res),
    };
    let out = full_pipeline_infer(&TryOnInputs::with_garments(&model, top, bottom, mask), &state.pipeline)?;
    let b64 = |bytes: Vec<u8>| BASE64.encode(bytes);
    let extra = req.want_intermediates;
    Ok(TryOnResponse {
        final_image: b64(png_bytes(&out.final_image)),
        parsing: extra.then(|| b64(label_png_bytes(res, &out.parsing.labels()))),
        warped_top: extra.then(|| b64(png_bytes(&out.warped_top))),
        warped_bottom: extra.then(|| b64(png_bytes(&out.warped_bottom))),
        timing_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Deserialize)]
struct MaskQuery {
    model_id: String,
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

async fn get_catalog(State(s): State<Arc<ServiceState>>) -> Json<Catalog> {
    Json(catalog(&s.manifest))
}

async fn get_default_mask(State(s): State<Arc<ServiceState>>, Query(q): Query<MaskQuery>) -> ApiResult<MaskWire> {
    let mask = tokio::task::spawn_blocking(move || default_mask(&s.manifest, &q.model_id))
        .await
        .map_err(|e| Error::Config(format!("worker failed: {e}")))??;
    Ok(Json(mask))
}

async fn post_tryon(State(s): State<Arc<ServiceState>>, Json(req): Json<TryOnRequest>) -> ApiResult<TryOnResponse> {
    let out = tokio::task::spawn_blocking(move || tryon(&s, &req))
        .await
        .map_err(|e| Error::Config(format!("worker failed: {e}")))??;
    Ok(Json(out))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/catalog", get(get_catalog))
        .route("/mask/default", get(get_default_mask))
        .route("/tryon", post(post_tryon))
        .with_state(state)
}

/// Serve until interrupted.
pub fn serve(state: ServiceState, addr: SocketAddr) -> Result<()> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::io(addr.to_string(), e))?;
        log::info!("listening on {}", listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?);
        axum::serve(listener, router(Arc::new(state)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Error::io(addr.to_string(), e))
    })
}
