//! HTTP backend for center + vertical-projection ball annotation.
//!
//! Serves images and calibration, computes click guides, stores annotations in a
//! journaled store, and fits ballistic trajectories to annotated sequences.

pub mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use monoball::ballistic::{self, BallisticError, TimedObservation, OUTLIER_FACTOR, STANDARD_GRAVITY};
use monoball::data::{self, BallAnnotation, DataError, DatasetManifest, ImageRecord, SecondPoint, TrajectoryRecord};
use monoball::geometry::{self, GeometryError, HeightRange, DEFAULT_BALL_DIAMETER, DEFAULT_GAP_TOLERANCE};
use monoball::{CalibratedCamera, Pixel, WorldPoint};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower_http::services::ServeDir;

use crate::store::{AnnotationStore, StoreError, StoredAnnotation};

/// Samples along the fitted curve in each overlay polyline.
pub const OVERLAY_SAMPLES: usize = 64;
/// Length [m] of each arm of the ground cross.
pub const CROSS_LENGTH: f64 = 1.0;
/// Annotations resolving further than this [m] below z = 0 are rejected.
pub const BELOW_COURT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SessionOptions {
    /// Defaults to `annotations/` next to the manifest.
    pub journal_dir: Option<PathBuf>,
    pub snapshot_every: usize,
    pub phi: f64,
    pub g: f64,
    pub gap_tolerance: f64,
    pub heights: HeightRange,
    pub ui_dir: Option<PathBuf>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            journal_dir: None,
            snapshot_every: 100,
            phi: DEFAULT_BALL_DIAMETER,
            g: STANDARD_GRAVITY,
            gap_tolerance: DEFAULT_GAP_TOLERANCE,
            heights: HeightRange::default(),
            ui_dir: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// A manifest opened for annotation.
#[derive(Debug)]
pub struct Session {
    manifest: DatasetManifest,
    base_dir: PathBuf,
    store: Mutex<AnnotationStore>,
    options: SessionOptions,
}

impl Session {
    pub fn open(manifest_path: &Path, options: SessionOptions) -> Result<Self, SessionError> {
        let manifest = data::load_manifest(manifest_path)?;
        let base_dir = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let journal_dir = options.journal_dir.clone().unwrap_or_else(|| base_dir.join("annotations"));
        Self::from_manifest(manifest, base_dir, &journal_dir, options)
    }

    pub fn from_manifest(
        manifest: DatasetManifest,
        base_dir: PathBuf,
        journal_dir: &Path,
        options: SessionOptions,
    ) -> Result<Self, SessionError> {
        let initial = manifest
            .images
            .iter()
            .filter_map(|i| i.annotation.map(|a| (i.id.clone(), a)));
        let store = AnnotationStore::open(journal_dir, initial, options.snapshot_every)?;
        Ok(Self {
            manifest,
            base_dir,
            store: Mutex::new(store),
            options,
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    /// Current annotations with their revisions.
    pub fn annotations(&self) -> BTreeMap<String, StoredAnnotation> {
        self.store.lock().annotations().clone()
    }

    fn record_with_current(&self, record: &ImageRecord) -> ImageRecord {
        let mut r = record.clone();
        r.annotation = self.store.lock().get(&record.id).map(|s| s.annotation);
        r
    }
}

#[derive(Clone)]
pub struct AppState(pub Arc<Session>);

/// Error body: `{code, message, detail}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id:?}")).with_detail(json!({ what: id }))
    }

    fn geometry(e: GeometryError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "geometry", e.to_string())
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl From<DataError> for ApiError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::UnknownImage(id) => Self::not_found("image", &id),
            DataError::UnknownTrajectory(id) => Self::not_found("trajectory", &id),
            DataError::Geometry { image, source } => Self::geometry(source).with_detail(json!({ "image": image })),
            e if e.is_validation() => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string()),
            e => Self::internal(e),
        }
    }
}

impl From<BallisticError> for ApiError {
    fn from(e: BallisticError) -> Self {
        match e {
            BallisticError::RankDeficient { count, distinct } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "rank_deficient", e.to_string())
                    .with_detail(json!({ "count": count, "distinct_timestamps": distinct }))
            }
            e => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "numeric", e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    let ui_dir = state.0.options.ui_dir.clone();
    let api = Router::new()
        .route("/api/sequences", get(list_sequences))
        .route("/api/images/{id}", get(get_image))
        .route("/api/images/{id}/data", get(get_image_data))
        .route("/api/images/{id}/guides", post(get_guides))
        .route("/api/images/{id}/annotation", put(put_annotation))
        .route("/api/trajectories/{id}/fit", post(fit_trajectory))
        .route("/api/trajectories/{id}/export", get(export_trajectory))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(state)).await
}

#[derive(Debug, Serialize)]
struct SequenceSummary {
    id: String,
    image_count: usize,
    annotated: usize,
    completeness: f64,
}

async fn list_sequences(State(AppState(s)): State<AppState>) -> Json<Vec<SequenceSummary>> {
    let store = s.store.lock();
    let out = s
        .manifest
        .trajectories
        .iter()
        .map(|t| {
            let annotated = t.image_ids.iter().filter(|id| store.get(id).is_some()).count();
            let image_count = t.image_ids.len();
            SequenceSummary {
                id: t.id.clone(),
                image_count,
                annotated,
                completeness: if image_count == 0 {
                    0.0
                } else {
                    annotated as f64 / image_count as f64
                },
            }
        })
        .collect();
    Json(out)
}

fn pair(p: Pixel) -> [f64; 2] {
    [p.x, p.y]
}

fn triple(p: WorldPoint) -> [f64; 3] {
    [p.x, p.y, p.z]
}

/// Stored annotation plus what it implies in 3D.
fn annotation_view(session: &Session, record: &ImageRecord, stored: &StoredAnnotation) -> Value {
    let mut with = record.clone();
    with.annotation = Some(stored.annotation);
    let mut v = serde_json::to_value(stored.annotation).expect("annotation serializes");
    v["revision"] = json!(stored.revision);
    let camera = session.manifest.camera_for(record);
    match camera.map(|c| data::resolve_annotation(&with, c, session.options.phi)) {
        Ok(Ok((position, ball))) => {
            v["position"] = json!(triple(position));
            v["implied_diameter"] = json!(ball.d);
        }
        Ok(Err(e)) | Err(e) => v["error"] = json!(e.to_string()),
    }
    v
}

async fn get_image(State(AppState(s)): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let record = s.manifest.image(&id)?;
    let camera = s.manifest.camera_for(record)?;
    let stored = s.store.lock().get(&id).copied();
    let trajectory = s.manifest.trajectories.iter().find_map(|t| {
        t.image_ids
            .iter()
            .position(|i| *i == id)
            .map(|k| json!({ "id": t.id, "timestamp": t.timestamps.get(k) }))
    });
    Ok(Json(json!({
        "id": record.id,
        "path": record.path,
        "camera": record.camera,
        "width": camera.width,
        "height": camera.height,
        "calibration": camera,
        "annotation": stored.map(|st| annotation_view(&s, record, &st)),
        "detections": record.detections,
        "trajectory": trajectory,
    })))
}

fn etag_matches(headers: &HeaderMap, etag: &str) -> bool {
    headers
        .get_all(header::IF_NONE_MATCH)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .map(|t| t.trim().trim_start_matches("W/"))
        .any(|t| t == "*" || t == etag)
}

fn content_type(path: &str) -> &'static str {
    match Path::new(path).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn get_image_data(
    State(AppState(s)): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let record = s.manifest.image(&id)?;
    let path = s.base_dir.join(&record.path);
    let bytes = tokio::fs::read(&path).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            ApiError::not_found("image file", &record.path)
        } else {
            ApiError::internal(e)
        }
    })?;
    let etag = format!("\"{}\"", hex::encode(Sha256::digest(&bytes)));
    let etag_value = HeaderValue::from_str(&etag).map_err(ApiError::internal)?;
    let cache = HeaderValue::from_static("public, max-age=86400");
    if etag_matches(&headers, &etag) {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag_value), (header::CACHE_CONTROL, cache)]).into_response());
    }
    Ok((
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(content_type(&record.path))),
            (header::ETAG, etag_value),
            (header::CACHE_CONTROL, cache),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
pub struct GuidesRequest {
    pub center: [f64; 2],
    #[serde(default)]
    pub ground: Option<[f64; 2]>,
    #[serde(default)]
    pub heights: Option<HeightRange>,
}

fn check_in_image(camera: &CalibratedCamera, name: &str, p: [f64; 2]) -> ApiResult<Pixel> {
    let px = Pixel::new(p[0], p[1]);
    if !camera.contains(&px) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "out_of_bounds",
            format!("{name} ({}, {}) outside the {}x{} image", p[0], p[1], camera.width, camera.height),
        )
        .with_detail(json!({ "field": name, "value": p })));
    }
    Ok(px)
}

async fn get_guides(
    State(AppState(s)): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<GuidesRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let record = s.manifest.image(&id)?;
    let camera = s.manifest.camera_for(record)?;
    let center = check_in_image(camera, "center", req.center)?;
    let heights = req.heights.unwrap_or(s.options.heights);
    let locus = geometry::projection_locus(camera, center, &heights).map_err(ApiError::geometry)?;
    let floor_px = match req.ground {
        Some(g) => check_in_image(camera, "ground", g)?,
        None => center,
    };
    let floor = camera.floor_point(floor_px).map_err(ApiError::geometry)?;
    let half = CROSS_LENGTH / 2.0;
    let arms = [
        [WorldPoint::new(floor.x - half, floor.y, 0.0), WorldPoint::new(floor.x + half, floor.y, 0.0)],
        [WorldPoint::new(floor.x, floor.y - half, 0.0), WorldPoint::new(floor.x, floor.y + half, 0.0)],
    ];
    let mut cross = Vec::new();
    for arm in &arms {
        let a = camera.project(&arm[0]).map_err(ApiError::geometry)?;
        let b = camera.project(&arm[1]).map_err(ApiError::geometry)?;
        cross.push([pair(a), pair(b)]);
    }
    Ok(Json(json!({
        "locus": locus.into_iter().map(pair).collect::<Vec<_>>(),
        "floor": triple(floor),
        "cross": cross,
        "cross_world": arms.iter().map(|a| [triple(a[0]), triple(a[1])]).collect::<Vec<_>>(),
    })))
}

#[derive(Debug, Deserialize)]
pub struct AnnotationRequest {
    pub center: [f64; 2],
    pub ground: [f64; 2],
    #[serde(default = "yes")]
    pub visible: bool,
}

fn yes() -> bool {
    true
}

async fn put_annotation(
    State(AppState(s)): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnnotationRequest>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    let record = s.manifest.image(&id)?;
    let camera = s.manifest.camera_for(record)?;
    let center = check_in_image(camera, "center", req.center)?;
    let ground = check_in_image(camera, "ground", req.ground)?;
    let fix = geometry::localize_from_projection(camera, center, ground, s.options.gap_tolerance)
        .map_err(ApiError::geometry)?;
    if fix.position.z < -BELOW_COURT_TOLERANCE {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "validation",
            format!("clicks put the ball {:.3} m below the court", -fix.position.z),
        )
        .with_detail(json!({ "position": triple(fix.position) })));
    }
    let ball = geometry::project_ball(camera, &fix.position, s.options.phi).map_err(ApiError::geometry)?;
    let annotation = BallAnnotation {
        center,
        second: SecondPoint::Ground(ground),
        visible: req.visible,
    };
    let revision = s.store.lock().put(&id, annotation).map_err(ApiError::internal)?;
    Ok(Json(json!({
        "image_id": id,
        "revision": revision,
        "annotation": annotation,
        "position": triple(fix.position),
        "floor": triple(fix.floor),
        "diameter": ball.d,
        "gap": fix.gap,
        "warning": fix.warning,
    })))
}

struct TrajectoryFit {
    record: TrajectoryRecord,
    image_ids: Vec<String>,
    observations: Vec<TimedObservation>,
    result: ballistic::FitResult,
}

fn fit_current(s: &Session, id: &str) -> ApiResult<TrajectoryFit> {
    let record = s.manifest.trajectory(id)?.clone();
    let mut image_ids = Vec::new();
    let mut observations = Vec::new();
    for (image_id, &t) in record.image_ids.iter().zip(&record.timestamps) {
        let current = s.record_with_current(s.manifest.image(image_id)?);
        if current.annotation.is_none() {
            continue;
        }
        let (position, _) = data::resolve_annotation(&current, s.manifest.camera_for(&current)?, s.options.phi)?;
        image_ids.push(image_id.clone());
        observations.push(TimedObservation::new(t, position));
    }
    let result = ballistic::fit(&observations, s.options.g)?;
    Ok(TrajectoryFit {
        record,
        image_ids,
        observations,
        result,
    })
}

async fn fit_trajectory(State(AppState(s)): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let fit = fit_current(&s, &id)?;
    let flags = fit.result.outliers(OUTLIER_FACTOR);
    let images: Vec<Value> = fit
        .image_ids
        .iter()
        .enumerate()
        .map(|(k, image_id)| {
            let r = fit.result.residuals[k];
            json!({
                "image_id": image_id,
                "t": fit.observations[k].t,
                "observed": triple(fit.observations[k].position),
                "fitted": triple(fit.result.denoised[k]),
                "residual": [r.x, r.y, r.z],
                "residual_norm": r.norm(),
                "outlier": flags[k],
            })
        })
        .collect();

    let (t0, t1) = (
        fit.record.timestamps.first().copied().unwrap_or(0.0),
        fit.record.timestamps.last().copied().unwrap_or(0.0),
    );
    let samples: Vec<(f64, WorldPoint)> = (0..OVERLAY_SAMPLES)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / (OVERLAY_SAMPLES - 1) as f64;
            (t, fit.result.trajectory.evaluate(t))
        })
        .collect();
    let mut overlays = serde_json::Map::new();
    for image_id in &fit.record.image_ids {
        let camera = s.manifest.camera_for(s.manifest.image(image_id)?)?;
        let line: Vec<Value> = samples
            .iter()
            .filter_map(|(t, p)| camera.project(p).ok().map(|px| json!({ "t": t, "px": pair(px) })))
            .collect();
        overlays.insert(image_id.clone(), Value::Array(line));
    }
    let traj = fit.result.trajectory;
    Ok(Json(json!({
        "trajectory_id": id,
        "g": traj.g,
        "p0": [traj.p0.x, traj.p0.y, traj.p0.z],
        "v0": [traj.v0.x, traj.v0.y, traj.v0.z],
        "rms": fit.result.rms,
        "outlier_factor": OUTLIER_FACTOR,
        "images": images,
        "overlays": overlays,
    })))
}

/// The trajectory's annotated images with fitted positions, as a standalone manifest.
fn export_manifest(s: &Session, id: &str) -> ApiResult<DatasetManifest> {
    let fit = fit_current(s, id)?;
    let mut out = DatasetManifest::new(format!("{}:{}", s.manifest.name, id));
    out.court = s.manifest.court;
    out.metadata.insert("source".into(), s.manifest.name.clone());
    out.metadata.insert("trajectory".into(), id.to_string());
    out.metadata.insert("rms".into(), format!("{}", fit.result.rms));
    let mut timestamps = Vec::new();
    for (k, image_id) in fit.image_ids.iter().enumerate() {
        let mut record = s.manifest.image(image_id)?.clone();
        let camera = s.manifest.camera_for(&record)?;
        let position = fit.result.denoised[k];
        let stored = s.store.lock().get(image_id).map(|a| a.annotation);
        let visible = stored.is_none_or(|a| a.visible);
        record.annotation = denoised_annotation(camera, &position, s.options.phi, visible);
        record.position = Some(position);
        out.cameras.insert(record.camera.clone(), *camera);
        out.images.push(record);
        timestamps.push(fit.observations[k].t);
    }
    out.trajectories.push(TrajectoryRecord {
        id: id.to_string(),
        image_ids: fit.image_ids,
        timestamps,
        fps: fit.record.fps,
    });
    Ok(out)
}

fn denoised_annotation(camera: &CalibratedCamera, p: &WorldPoint, phi: f64, visible: bool) -> Option<BallAnnotation> {
    let center = camera.project(p).ok().filter(|c| camera.contains(c))?;
    let ground = camera
        .project(&WorldPoint::new(p.x, p.y, 0.0))
        .ok()
        .filter(|g| camera.contains(g));
    let second = match ground {
        Some(g) => SecondPoint::Ground(g),
        None => SecondPoint::Diameter(geometry::project_ball(camera, p, phi).ok()?.d),
    };
    Some(BallAnnotation { center, second, visible })
}

async fn export_trajectory(State(AppState(s)): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<DatasetManifest>> {
    Ok(Json(export_manifest(&s, &id)?))
}
