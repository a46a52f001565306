//! HTTP-level tests of the scoring and annotation routes.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use critic_kit::service::{
    read_rating_log, router, AnnotationStore, AppState, ConstantScorer, HashScorer, ProxyScorer, Scorer, ScoringLimits,
    TaskSpec, ANNOTATOR_HEADER, RATING_LOG_FILE,
};
use critic_kit::stats::{compute_reward_targets, Dimension};

fn pool(n: usize) -> Vec<TaskSpec> {
    (0..n)
        .map(|i| TaskSpec {
            critique_id: format!("c{i:03}"),
            source_image: format!("src/{i}.png"),
            edited_image: format!("edit/{i}.png"),
            instruction: "brighten the foreground".into(),
            critique_text: format!("critique number {i}"),
        })
        .collect()
}

fn app(scorer: Arc<dyn Scorer>, store: AnnotationStore) -> Router {
    router(AppState::new(scorer, ScoringLimits::default(), store))
}

fn annotation_app(n: usize, log: Option<PathBuf>) -> Router {
    let store = AnnotationStore::open(pool(n), BTreeSet::new(), 1, log).unwrap();
    app(Arc::new(HashScorer::default()), store)
}

fn scoring_app(scorer: Arc<dyn Scorer>) -> Router {
    app(scorer, AnnotationStore::open(Vec::new(), BTreeSet::new(), 0, None).unwrap())
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(serde_json::to_vec(body).unwrap()))
        .unwrap();
    send(app, req).await
}

fn rating(task_id: &Value, annotator: &str, l: i64, a: i64, u: i64) -> Value {
    json!({ "task_id": task_id, "annotator": annotator, "scores": {"logicality": l, "accuracy": a, "usefulness": u} })
}

fn log_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).map_or(0, |s| s.lines().count())
}

fn item() -> Value {
    json!({"source_image": "a.png", "edited_image": "b.png", "instruction": "crop", "critic": "clean crop"})
}

#[tokio::test]
async fn next_task_is_idempotent_until_rated() {
    let app = annotation_app(5, None);
    let (s1, first) = get(&app, "/tasks/next?annotator=ann").await;
    let (_, again) = get(&app, "/tasks/next?annotator=ann").await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(first, again);
    assert_eq!(first["status"], "pending");
    assert_eq!(first["assigned_annotator"], "ann");

    let (s, _) = post(&app, "/ratings", &rating(&first["task_id"], "ann", 3, 4, 2)).await;
    assert_eq!(s, StatusCode::OK);
    let (_, next) = get(&app, "/tasks/next?annotator=ann").await;
    assert_ne!(next["task_id"], first["task_id"]);
}

#[tokio::test]
async fn annotator_header_is_accepted() {
    let app = annotation_app(3, None);
    let req = Request::get("/tasks/next").header(ANNOTATOR_HEADER, "hdr").body(Body::empty()).unwrap();
    let (s, task) = send(&app, req).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(task["assigned_annotator"], "hdr");
    let (s, _) = get(&app, "/tasks/next").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn pool_exhaustion_returns_no_content() {
    let app = annotation_app(3, None);
    for _ in 0..3 {
        let (_, t) = get(&app, "/tasks/next?annotator=ann").await;
        post(&app, "/ratings", &rating(&t["task_id"], "ann", 4, 4, 4)).await;
    }
    let (s, body) = get(&app, "/tasks/next?annotator=ann").await;
    assert_eq!(s, StatusCode::NO_CONTENT);
    assert_eq!(body, Value::Null);
    let (_, p) = get(&app, "/progress?annotator=ann").await;
    assert_eq!((p["done"].as_u64(), p["total"].as_u64()), (Some(3), Some(3)));
}

#[tokio::test]
async fn double_submit_persists_one_rating() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join(RATING_LOG_FILE);
    let app = annotation_app(4, Some(log.clone()));
    let (_, t) = get(&app, "/tasks/next?annotator=ann").await;
    let r = rating(&t["task_id"], "ann", 5, 4, 3);
    assert_eq!(post(&app, "/ratings", &r).await.0, StatusCode::OK);
    let (s, body) = post(&app, "/ratings", &r).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(body["error"], "duplicate_submission");
    assert_eq!(log_lines(&log), 1);
}

#[tokio::test]
async fn invalid_scores_are_rejected_and_not_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join(RATING_LOG_FILE);
    let app = annotation_app(4, Some(log.clone()));
    let (_, t) = get(&app, "/tasks/next?annotator=ann").await;
    let bad = [
        rating(&t["task_id"], "ann", 0, 3, 3),
        rating(&t["task_id"], "ann", 3, 6, 3),
        json!({"task_id": t["task_id"], "annotator": "ann", "scores": {"logicality": 2.5, "accuracy": 3, "usefulness": 3}}),
        json!({"task_id": t["task_id"], "annotator": "ann", "scores": {"logicality": 3, "accuracy": 3}}),
    ];
    for b in &bad {
        let (s, body) = post(&app, "/ratings", b).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{b}");
        assert_eq!(body["error"], "invalid_score");
    }
    assert_eq!(log_lines(&log), 0);
    let (_, p) = get(&app, "/progress?annotator=ann").await;
    assert_eq!(p["done"], 0);
}

#[tokio::test]
async fn unknown_task_and_annotator() {
    let store = AnnotationStore::open(pool(3), ["alice".to_string()].into(), 0, None).unwrap();
    let app = app(Arc::new(HashScorer::default()), store);
    assert_eq!(get(&app, "/tasks/next?annotator=mallory").await.0, StatusCode::NOT_FOUND);
    let (s, body) = post(&app, "/ratings", &rating(&json!("nope"), "alice", 3, 3, 3)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_task");
}

#[tokio::test]
async fn top_rating_yields_three_records_for_aggregation() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join(RATING_LOG_FILE);
    let app = annotation_app(2, Some(log.clone()));
    let (_, t) = get(&app, "/tasks/next?annotator=ann").await;
    post(&app, "/ratings", &rating(&t["task_id"], "ann", 5, 5, 5)).await;

    let records = read_rating_log(&log).unwrap();
    assert_eq!(records.len(), 3);
    let dims: BTreeSet<Dimension> = records.iter().map(|r| r.dimension).collect();
    assert_eq!(dims.len(), 3);
    assert!(records.iter().all(|r| r.score == 5 && r.annotator_id == "ann" && Some(r.critique_id.as_str()) == t["task_id"].as_str()));
    let targets = compute_reward_targets(&records, &BTreeSet::new()).unwrap();
    assert_eq!(targets.len(), 1);
    // A single score sits at smoothed percentile 0.5.
    assert!(targets[0].targets.iter().all(|x| x.abs() < 1e-12));
}

#[tokio::test]
async fn annotators_get_different_orders() {
    let mut store = AnnotationStore::open(pool(100), BTreeSet::new(), 7, None).unwrap();
    let a = store.order("alice").to_vec();
    let b = store.order("bob").to_vec();
    assert_ne!(a, b);
    let mut sorted = a.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..100).collect::<Vec<_>>());

    let app = annotation_app(100, None);
    let (_, ta) = get(&app, "/tasks/next?annotator=alice").await;
    let mut walk_a = vec![ta["task_id"].clone()];
    let mut walk_b = Vec::new();
    for _ in 0..5 {
        let (_, t) = get(&app, "/tasks/next?annotator=bob").await;
        walk_b.push(t["task_id"].clone());
        post(&app, "/ratings", &rating(&t["task_id"], "bob", 3, 3, 3)).await;
    }
    for _ in 0..4 {
        post(&app, "/ratings", &rating(walk_a.last().unwrap(), "alice", 3, 3, 3)).await;
        walk_a.push(get(&app, "/tasks/next?annotator=alice").await.1["task_id"].clone());
    }
    assert_ne!(walk_a, walk_b);
}

#[tokio::test]
async fn restart_replays_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join(RATING_LOG_FILE);
    let app1 = annotation_app(6, Some(log.clone()));
    for _ in 0..3 {
        let (_, t) = get(&app1, "/tasks/next?annotator=ann").await;
        post(&app1, "/ratings", &rating(&t["task_id"], "ann", 2, 3, 4)).await;
    }
    let (_, before) = get(&app1, "/progress?annotator=ann").await;
    let (_, next_before) = get(&app1, "/tasks/next?annotator=ann").await;
    drop(app1);

    let app2 = annotation_app(6, Some(log));
    assert_eq!(get(&app2, "/progress?annotator=ann").await.1, before);
    assert_eq!(get(&app2, "/tasks/next?annotator=ann").await.1, next_before);
    assert_eq!(before["per_dimension_counts"]["accuracy"], 3);
}

#[tokio::test]
async fn score_batch_status_codes() {
    let app = scoring_app(Arc::new(ConstantScorer([0.2, 0.5, 0.8])));
    let (s, body) = post(&app, "/score", &json!({ "items": [item(), item()] })).await;
    assert_eq!(s, StatusCode::OK);
    let r = body["items"][1]["reward"].as_f64().unwrap();
    assert!((r - (0.3 * 0.2 + 0.4 * 0.5 + 0.3 * 0.8)).abs() < 1e-12);

    let (s, body) = post(&app, "/score", &json!({ "items": [] })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "batch_size");

    let (s, _) = post(&app, "/score", &json!({ "items": vec![item(); 33] })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let req = Request::post("/score").body(Body::from("{not json")).unwrap();
    let (s, body) = send(&app, req).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_request");

    let (s, body) = post(&app, "/v1/score", &json!({ "items": [item(), {"critic": ""}] })).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["items"][0]["reward"].is_number());
    let fields: BTreeSet<&str> =
        body["items"][1]["fields"].as_array().unwrap().iter().filter_map(|f| f["field"].as_str()).collect();
    assert!(fields.contains("source_image") && fields.contains("critic"), "{fields:?}");
}

#[tokio::test]
async fn unreachable_proxy_is_service_unavailable() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let proxy = ProxyScorer { base_url: format!("http://127.0.0.1:{port}"), timeout: Duration::from_secs(2) };
    let app = scoring_app(Arc::new(proxy));
    let (s, body) = post(&app, "/score", &json!({ "items": [item()] })).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"], "backend_unavailable");
}

#[tokio::test]
async fn health_names_backend() {
    let app = scoring_app(Arc::new(HashScorer::default()));
    let (s, body) = get(&app, "/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["backend"], "hash");
}
