//! JSON-over-HTTP API for the shape explorer.
//!
//! Models, dataset metadata and weather are loaded once at startup and never written;
//! every request is a pure function of its body.

use std::future::Future;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use shapenergy_core::geometry::{build_footprint, ShapeParams};
use shapenergy_core::raster::rasterize;
use shapenergy_core::weather::WeatherSeries;

use crate::checkpoint::{load_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::store::{load_manifest, Context, DatasetManifest};
use crate::VERSION;

#[derive(Debug)]
pub struct AppState {
    pub dnn: Option<Checkpoint>,
    pub cnn: Option<Checkpoint>,
    pub dataset: Option<DatasetManifest>,
    pub context: Context,
    pub weather: WeatherSeries,
    pub static_dir: Option<PathBuf>,
}

fn load_family(path: Option<&Path>, family: &str) -> Result<Option<Checkpoint>> {
    let Some(path) = path else { return Ok(None) };
    let checkpoint = load_checkpoint(path)?;
    let found = checkpoint.manifest.model.name();
    if found != family {
        return Err(Error::Usage(format!("{} holds a {found} model, not a {family}", path.display())));
    }
    Ok(Some(checkpoint))
}

impl AppState {
    pub fn load(dnn: Option<&Path>, cnn: Option<&Path>, data: Option<&Path>, static_dir: Option<PathBuf>) -> Result<Self> {
        let dnn = load_family(dnn, "dnn")?;
        let cnn = load_family(cnn, "cnn")?;
        let dataset = data.map(load_manifest).transpose()?;
        let loaded: Vec<&Checkpoint> = dnn.iter().chain(cnn.iter()).collect();
        let context = Context::resolve(data, &loaded)?;
        let weather = context.weather.load()?;
        Ok(Self { dnn, cnn, dataset, context, weather, static_dir })
    }
}

fn reply(status: StatusCode, mut body: Value) -> Response {
    body["version"] = json!(VERSION);
    (status, Json(body)).into_response()
}

fn fail(status: StatusCode, message: impl ToString) -> Response {
    reply(status, json!({ "error": message.to_string() }))
}

#[derive(Deserialize)]
struct ShapeBody {
    x: Vec<f64>,
}

#[allow(clippy::result_large_err)]
/// 400 for anything that is not `{"x": [four numbers]}`, 422 for offsets out of range.
fn parse_shape(body: &[u8]) -> Result<ShapeParams, Response> {
    let parsed: ShapeBody =
        serde_json::from_slice(body).map_err(|e| fail(StatusCode::BAD_REQUEST, format!("malformed body: {e}")))?;
    let x: [f64; 4] = parsed
        .x
        .try_into()
        .map_err(|v: Vec<f64>| fail(StatusCode::BAD_REQUEST, format!("x needs 4 values, got {}", v.len())))?;
    ShapeParams::from_array(x).map_err(|e| fail(StatusCode::UNPROCESSABLE_ENTITY, e))
}

fn model_info(c: &Option<Checkpoint>) -> Value {
    match c {
        None => Value::Null,
        Some(c) => json!({
            "model": c.manifest.model,
            "param_count": c.manifest.param_count,
            "layers": c.manifest.spec.layers.len(),
            "train": c.manifest.train,
            "normalizer": c.manifest.normalizer,
            "dataset_labels_sha256": c.manifest.dataset_labels_sha256,
        }),
    }
}

async fn info(State(app): State<Arc<AppState>>) -> Response {
    let dataset = app.dataset.as_ref().map(|m| {
        json!({
            "n_samples": m.config.n_samples,
            "seed": m.config.seed,
            "n_train": m.train_ids.len(),
            "n_test": m.test_ids.len(),
            "labels_sha256": m.labels_sha256,
            "normalizer": m.normalizer,
        })
    });
    let cfg = &app.context.config;
    reply(
        StatusCode::OK,
        json!({
            "models": { "dnn": model_info(&app.dnn), "cnn": model_info(&app.cnn) },
            "dataset": dataset,
            "geometry": cfg.geometry,
            "raster": cfg.raster,
            "building": cfg.building,
            "weather": app.context.weather,
        }),
    )
}

async fn footprint(State(app): State<Arc<AppState>>, body: Bytes) -> Response {
    let params = match parse_shape(&body) {
        Ok(p) => p,
        Err(r) => return r,
    };
    let cfg = &app.context.config;
    let f = build_footprint(&params, &cfg.geometry);
    let image = match rasterize(&f, &cfg.raster) {
        Ok(img) => img,
        Err(e) => return fail(StatusCode::INTERNAL_SERVER_ERROR, e),
    };
    let vertices: Vec<[f64; 2]> = f.vertices().iter().map(|p| [p.x, p.y]).collect();
    let raster: Vec<&[u8]> = image.rows().collect();
    reply(StatusCode::OK, json!({ "vertices": vertices, "area_m2": f.area(), "raster": raster }))
}

async fn predict(State(app): State<Arc<AppState>>, body: Bytes) -> Response {
    let params = match parse_shape(&body) {
        Ok(p) => p,
        Err(r) => return r,
    };
    if app.dnn.is_none() && app.cnn.is_none() {
        return fail(StatusCode::SERVICE_UNAVAILABLE, "no model loaded");
    }
    let result = tokio::task::spawn_blocking(move || -> Result<Value> {
        let dnn = app.dnn.as_ref().map(|c| c.predict_kwh(&params)).transpose()?;
        let cnn = app.cnn.as_ref().map(|c| c.predict_kwh(&params)).transpose()?;
        Ok(json!({ "dnn_kwh": dnn, "cnn_kwh": cnn }))
    })
    .await;
    match result {
        Ok(Ok(body)) => reply(StatusCode::OK, body),
        Ok(Err(e)) => fail(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => fail(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn simulate(State(app): State<Arc<AppState>>, body: Bytes) -> Response {
    let params = match parse_shape(&body) {
        Ok(p) => p,
        Err(r) => return r,
    };
    let result = tokio::task::spawn_blocking(move || app.context.simulate(&params, &app.weather)).await;
    match result {
        Ok(Ok(e)) => reply(StatusCode::OK, json!(e)),
        Ok(Err(e)) => fail(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => fail(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// Maps a request path into the static directory; `None` for anything that could
/// escape it.
pub fn static_path(root: &Path, uri_path: &str) -> Option<PathBuf> {
    let relative = uri_path.trim_start_matches('/');
    let relative = if relative.is_empty() || relative.ends_with('/') {
        format!("{relative}index.html")
    } else {
        relative.to_string()
    };
    if relative.contains('\\') {
        return None;
    }
    let rel = Path::new(&relative);
    rel.components().all(|c| matches!(c, Component::Normal(_))).then(|| root.join(rel))
}

async fn static_file(State(app): State<Arc<AppState>>, uri: Uri) -> Response {
    let not_found = || fail(StatusCode::NOT_FOUND, format!("no route for {}", uri.path()));
    let Some(root) = &app.static_dir else { return not_found() };
    let Some(path) = static_path(root, uri.path()) else { return not_found() };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => not_found(),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/info", get(info))
        .route("/api/footprint", post(footprint))
        .route("/api/predict", post(predict))
        .route("/api/simulate", post(simulate))
        .fallback(static_file)
        .with_state(state)
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(Arc::new(state))).with_graceful_shutdown(shutdown).await
}
