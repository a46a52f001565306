//! HTTP routes for scoring and annotation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::Value;
use tokio::sync::Semaphore;

use super::annotation::{AnnotationError, AnnotationStore, LikertScores};
use super::backend::{BackendError, Scorer};
use super::schema::{ErrorBody, ItemError, ItemResult, ScoreItem, ScoreRequest, ScoreResponse, ScoredItem};

pub const ANNOTATOR_HEADER: &str = "x-annotator-id";

#[derive(Debug, Clone, Copy)]
pub struct ScoringLimits {
    pub max_batch: usize,
    pub request_timeout: Duration,
    /// Batches scored concurrently; further requests wait for a slot.
    pub concurrent_batches: usize,
}

impl Default for ScoringLimits {
    fn default() -> Self {
        ScoringLimits { max_batch: 32, request_timeout: Duration::from_secs(30), concurrent_batches: 4 }
    }
}

#[derive(Clone)]
pub struct AppState {
    scorer: Arc<dyn Scorer>,
    limits: ScoringLimits,
    slots: Arc<Semaphore>,
    store: Arc<Mutex<AnnotationStore>>,
}

impl AppState {
    pub fn new(scorer: Arc<dyn Scorer>, limits: ScoringLimits, store: AnnotationStore) -> Self {
        AppState {
            scorer,
            slots: Arc::new(Semaphore::new(limits.concurrent_batches.max(1))),
            limits,
            store: Arc::new(Mutex::new(store)),
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/score", post(score))
        .route("/v1/score", post(score))
        .route("/tasks/next", get(next_task))
        .route("/ratings", post(ratings))
        .route("/progress", get(progress))
        .with_state(state)
}

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: kind.to_string(), message: message.into() })).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Response> {
    serde_json::from_slice(body).map_err(|e| error(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

async fn health(State(s): State<AppState>) -> Json<Value> {
    Json(serde_json::json!({ "status": "ok", "backend": s.scorer.name() }))
}

/// 200 when every item scored, 422 with per-item errors otherwise; valid
/// items are scored either way.
async fn score(State(s): State<AppState>, body: Bytes) -> Response {
    let req: ScoreRequest = match parse_body(&body) {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let n = req.items.len();
    if n == 0 || n > s.limits.max_batch {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            "batch_size",
            format!("batch must hold 1..={} items, got {n}", s.limits.max_batch),
        );
    }
    let mut slots: Vec<Option<ItemResult>> = vec![None; n];
    let mut valid = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    for (i, raw) in req.items.iter().enumerate() {
        match ScoreItem::from_value(raw) {
            Ok(item) => {
                valid.push(item);
                positions.push(i);
            }
            Err(fields) => slots[i] = Some(ItemResult::Invalid(ItemError { error: "validation".into(), fields })),
        }
    }
    if !valid.is_empty() {
        let dims = match run_scorer(&s, valid).await {
            Ok(d) => d,
            Err(BackendError::Unavailable(m)) => return error(StatusCode::SERVICE_UNAVAILABLE, "backend_unavailable", m),
            Err(BackendError::Malformed(m)) => return error(StatusCode::BAD_GATEWAY, "backend_malformed", m),
        };
        for (pos, d) in positions.into_iter().zip(dims) {
            slots[pos] = Some(ItemResult::Scored(ScoredItem::from_dims(d)));
        }
    }
    let any_invalid = slots.iter().any(|r| matches!(r, Some(ItemResult::Invalid(_))));
    let items: Vec<ItemResult> = slots.into_iter().map(|r| r.expect("every slot filled")).collect();
    let status = if any_invalid { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::OK };
    (status, Json(ScoreResponse { items })).into_response()
}

async fn run_scorer(s: &AppState, items: Vec<ScoreItem>) -> Result<Vec<[f64; 3]>, BackendError> {
    let _permit = tokio::time::timeout(s.limits.request_timeout, s.slots.clone().acquire_owned())
        .await
        .map_err(|_| BackendError::Unavailable("timed out waiting for a scoring slot".into()))?
        .map_err(|_| BackendError::Unavailable("scoring slots closed".into()))?;
    let scorer = s.scorer.clone();
    let n = items.len();
    let job = tokio::task::spawn_blocking(move || scorer.score(&items));
    let dims = tokio::time::timeout(s.limits.request_timeout, job)
        .await
        .map_err(|_| BackendError::Unavailable("scoring timed out".into()))?
        .map_err(|e| BackendError::Unavailable(format!("scorer panicked: {e}")))??;
    if dims.len() != n {
        return Err(BackendError::Malformed(format!("{} scores for {n} items", dims.len())));
    }
    Ok(dims)
}

fn annotation_error(e: AnnotationError) -> Response {
    let (status, kind) = match &e {
        AnnotationError::UnknownAnnotator(_) => (StatusCode::NOT_FOUND, "unknown_annotator"),
        AnnotationError::UnknownTask(_) => (StatusCode::NOT_FOUND, "unknown_task"),
        AnnotationError::InvalidScore { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_score"),
        AnnotationError::DuplicateSubmission { .. } => (StatusCode::CONFLICT, "duplicate_submission"),
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
    };
    error(status, kind, e.to_string())
}

fn annotator_of(query: &HashMap<String, String>, headers: &HeaderMap) -> Result<String, Response> {
    query
        .get("annotator")
        .cloned()
        .or_else(|| headers.get(ANNOTATOR_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string))
        .filter(|a| !a.is_empty())
        .ok_or_else(|| error(StatusCode::BAD_REQUEST, "bad_request", "annotator id required"))
}

fn json_ok<T: Serialize>(v: T) -> Response {
    (StatusCode::OK, Json(v)).into_response()
}

async fn next_task(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>, headers: HeaderMap) -> Response {
    let annotator = match annotator_of(&q, &headers) {
        Ok(a) => a,
        Err(r) => return r,
    };
    let result = s.store.lock().expect("store lock").next_task(&annotator);
    match result {
        Ok(Some(task)) => json_ok(task),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => annotation_error(e),
    }
}

async fn ratings(State(s): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let v: Value = match parse_body(&body) {
        Ok(v) => v,
        Err(r) => return r,
    };
    let Some(task_id) = v.get("task_id").and_then(Value::as_str) else {
        return error(StatusCode::BAD_REQUEST, "bad_request", "task_id required");
    };
    let annotator = match v.get("annotator").and_then(Value::as_str) {
        Some(a) => a.to_string(),
        None => match annotator_of(&HashMap::new(), &headers) {
            Ok(a) => a,
            Err(r) => return r,
        },
    };
    let scores = match LikertScores::from_value(v.get("scores").unwrap_or(&Value::Null)) {
        Ok(s) => s,
        Err(e) => return annotation_error(e),
    };
    let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64);
    let result = s.store.lock().expect("store lock").submit(task_id, &annotator, scores, ts);
    match result {
        Ok(ev) => json_ok(serde_json::json!({ "status": "ok", "task_id": ev.task_id, "annotator": ev.annotator })),
        Err(e) => annotation_error(e),
    }
}

async fn progress(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>, headers: HeaderMap) -> Response {
    let annotator = match annotator_of(&q, &headers) {
        Ok(a) => a,
        Err(r) => return r,
    };
    let result = s.store.lock().expect("store lock").progress(&annotator);
    match result {
        Ok(p) => json_ok(p),
        Err(e) => annotation_error(e),
    }
}
