//! JSON-over-HTTP surface for the browser editor.

use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sse_core::maskgen::{adding_object_mask, mask_for_scene, MaskKind};
use sse_core::shapeworld::pngio::{encode_gray8, rgb_png_bytes};
use sse_core::shapeworld::ClassCatalog;
use sse_core::style_codec::{reference_candidates, RegionId, RegionLayout};

use crate::edit::{b64_encode, edit, gray16_png, EditRequest};
use crate::error::{ErrorBody, ServiceError};
use crate::store::{LoadedModel, SceneStore};

/// Response header carrying the server-side edit time, kept out of the body
/// so identical requests produce identical bodies.
pub const ELAPSED_HEADER: &str = "x-elapsed-ms";

/// Shared state. The model is an immutable snapshot; reloading swaps the
/// pointer, and requests in flight keep the snapshot they started with.
pub struct AppState {
    model: RwLock<Arc<LoadedModel>>,
    pub scenes: Arc<SceneStore>,
}

impl AppState {
    pub fn new(model: LoadedModel, scenes: SceneStore) -> Arc<Self> {
        Arc::new(Self { model: RwLock::new(Arc::new(model)), scenes: Arc::new(scenes) })
    }

    pub fn snapshot(&self) -> Arc<LoadedModel> {
        self.model.read().expect("model lock poisoned").clone()
    }

    pub fn swap(&self, model: LoadedModel) {
        *self.model.write().expect("model lock poisoned") = Arc::new(model);
    }
}

struct ApiError(ServiceError);

impl<E: Into<ServiceError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{}", self.0);
        }
        (status, Json(ErrorBody::from(&self.0))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/catalog", get(catalog))
        .route("/scenes", get(scenes))
        .route("/scenes/{id}", get(scene))
        .route("/styles", get(styles))
        .route("/edit", post(edit_handler))
        .route("/masks/generate", post(generate_mask))
        .with_state(state)
}

#[derive(Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub checkpoint: String,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health { status: "ok".into(), checkpoint: state.snapshot().fingerprint.clone() })
}

async fn catalog() -> Json<ClassCatalog> {
    Json(ClassCatalog::default())
}

#[derive(Serialize, Deserialize)]
pub struct SceneInfo {
    pub id: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

#[derive(Serialize, Deserialize)]
pub struct SceneList {
    pub scenes: Vec<SceneInfo>,
}

async fn scenes(State(state): State<Arc<AppState>>) -> Json<SceneList> {
    let scenes = state.scenes.scenes.iter().enumerate().map(|(id, s)| SceneInfo { id, seed: s.seed, width: s.width, height: s.height }).collect();
    Json(SceneList { scenes })
}

/// A scene with its maps as base64 PNGs (RGB8 image, 16-bit labels, 8-bit edges).
#[derive(Serialize, Deserialize)]
pub struct SceneView {
    pub id: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub image_png: String,
    pub semantic_png: String,
    pub instance_png: String,
    pub edges_png: String,
}

async fn scene(State(state): State<Arc<AppState>>, Path(id): Path<usize>) -> ApiResult<Json<SceneView>> {
    let s = state.scenes.get(id)?;
    let (w, h) = (s.width, s.height);
    let mut edges = Vec::new();
    encode_gray8(&mut edges, w, h, &s.edges.iter().map(|&e| e * 255).collect::<Vec<_>>())?;
    Ok(Json(SceneView {
        id,
        seed: s.seed,
        width: w,
        height: h,
        image_png: b64_encode(&rgb_png_bytes(w, h, &s.image)?),
        semantic_png: gray16_png(w, h, &s.semantic)?,
        instance_png: gray16_png(w, h, &s.instance)?,
        edges_png: b64_encode(&edges),
    }))
}

#[derive(Deserialize)]
struct StylesQuery {
    class: Option<String>,
    limit: Option<usize>,
}

#[derive(Serialize, Deserialize)]
pub struct StyleCandidate {
    pub scene: usize,
    pub region: RegionId,
    /// Base64 RGB8 PNG of the region's bounding box.
    pub thumbnail_png: String,
}

#[derive(Serialize, Deserialize)]
pub struct StyleCandidates {
    pub class: u16,
    pub candidates: Vec<StyleCandidate>,
}

pub const DEFAULT_STYLE_LIMIT: usize = 24;

async fn styles(State(state): State<Arc<AppState>>, Query(q): Query<StylesQuery>) -> ApiResult<Json<StyleCandidates>> {
    let raw = q.class.ok_or_else(|| ServiceError::field("class", "required"))?;
    let class: u16 = raw.parse().map_err(|_| ServiceError::field("class", format!("`{raw}` is not a class id")))?;
    if ClassCatalog::default().get(class).is_none() {
        return Err(ServiceError::field("class", format!("unknown class {class}")).into());
    }
    let limit = q.limit.unwrap_or(DEFAULT_STYLE_LIMIT);
    let mut candidates = Vec::new();
    for (sid, region) in reference_candidates(&state.scenes.scenes, class, None).into_iter().take(limit) {
        let s = &state.scenes.scenes[sid];
        let layout = RegionLayout::of_scene(s)?;
        let (mut x0, mut y0, mut x1, mut y1) = (s.width, s.height, 0, 0);
        for p in (0..s.pixels()).filter(|&p| layout.region_at(p) == region) {
            let (x, y) = (p % s.width, p / s.width);
            (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
        }
        let crop: Vec<f32> = (y0..=y1).flat_map(|y| s.image[(y * s.width + x0) * 3..(y * s.width + x1 + 1) * 3].iter().copied()).collect();
        let png = rgb_png_bytes(x1 - x0 + 1, y1 - y0 + 1, &crop)?;
        candidates.push(StyleCandidate { scene: sid, region, thumbnail_png: b64_encode(&png) });
    }
    Ok(Json(StyleCandidates { class, candidates }))
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Malformed(e.to_string()))
}

async fn edit_handler(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: EditRequest = parse_json(&body)?;
    let model = state.snapshot();
    let scenes = state.scenes.clone();
    let started = Instant::now();
    let result = tokio::task::spawn_blocking(move || edit(&model, &scenes, &req).map(|o| o.result))
        .await
        .map_err(|e| ServiceError::Core(sse_core::CoreError::Format(format!("edit task failed: {e}"))))??;
    let mut response = Json(result).into_response();
    let ms = format!("{:.1}", started.elapsed().as_secs_f64() * 1e3);
    response.headers_mut().insert(ELAPSED_HEADER, HeaderValue::from_str(&ms).expect("ascii"));
    Ok(response)
}

/// Body of `POST /masks/generate`. The mask takes the size of `scene` when
/// given, else `width × height`, else the model resolution squared.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub kind: MaskKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scene: Option<usize>,
    #[serde(default)]
    pub instance: Option<u16>,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub height: Option<usize>,
}

async fn generate_mask(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let spec: MaskSpec = parse_json(&body)?;
    let res = state.snapshot().resolution();
    let mask = match spec.scene {
        Some(id) => {
            let s = state.scenes.get(id)?;
            match (spec.kind, spec.instance) {
                (MaskKind::AddObject, Some(i)) => adding_object_mask(&s.instance, s.height, s.width, i),
                _ => mask_for_scene(spec.kind, spec.seed, s),
            }
        }
        None if spec.kind == MaskKind::AddObject => return Err(ServiceError::field("scene", "required for addobj masks").into()),
        None => {
            let (w, h) = (spec.width.unwrap_or(res), spec.height.unwrap_or(res));
            let blank = sse_core::shapeworld::LabeledScene::from_parts(w, h, vec![0.0; w * h * 3], vec![0; w * h], vec![0; w * h], 0)?;
            mask_for_scene(spec.kind, spec.seed, &blank)
        }
    }
    .map_err(|e| ServiceError::field("kind", e.to_string()))?;
    let png = mask.to_png_bytes()?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
