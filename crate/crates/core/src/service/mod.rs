//! The batched reward-scoring endpoint and the annotation API.
//!
//! `POST /score` (alias `/v1/score`) takes `{"items": [...]}` with the four
//! fields `source_image`, `edited_image`, `instruction` and `critic`, and
//! answers `{"items": [...]}` in request order. Each slot is either a scored
//! item with the weighted reward or a per-item validation error.
//!
//! `GET /tasks/next`, `POST /ratings` and `GET /progress` serve annotators
//! from a task pool, persisting ratings to `ratings_log.jsonl`.

pub mod annotation;
pub mod backend;
pub mod schema;
mod server;

use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use annotation::{
    read_rating_log, AnnotationError, AnnotationStore, AnnotationTask, LikertScores, Progress, RatingEvent, TaskSpec,
};
pub use backend::{BackendError, ConstantScorer, HashScorer, ModelScorer, ProxyScorer, Scorer, TargetWordScorer};
pub use server::{router, AppState, ScoringLimits, ANNOTATOR_HEADER};

use crate::util::read_jsonl;

pub const RATING_LOG_FILE: &str = "ratings_log.jsonl";

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub limits: ScoringLimits,
    /// Holds `ratings_log.jsonl`; `None` keeps ratings in memory.
    pub data_dir: Option<PathBuf>,
    /// JSONL of [`TaskSpec`] rows.
    pub tasks: Option<PathBuf>,
    /// Empty accepts any annotator id.
    pub annotators: BTreeSet<String>,
    pub seed_salt: u64,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            limits: ScoringLimits::default(),
            data_dir: None,
            tasks: None,
            annotators: BTreeSet::new(),
            seed_salt: 0,
        }
    }
}

impl ServeConfig {
    pub fn open_store(&self) -> anyhow::Result<AnnotationStore> {
        let tasks: Vec<TaskSpec> = match &self.tasks {
            Some(p) => read_jsonl(p)?,
            None => Vec::new(),
        };
        let log = match &self.data_dir {
            Some(d) => {
                std::fs::create_dir_all(d)?;
                Some(d.join(RATING_LOG_FILE))
            }
            None => None,
        };
        Ok(AnnotationStore::open(tasks, self.annotators.clone(), self.seed_salt, log)?)
    }
}

/// Binds and serves until ctrl-c. `on_bound` receives the actual address,
/// which differs from the configured one when binding port 0.
pub async fn serve(
    config: &ServeConfig,
    scorer: Arc<dyn Scorer>,
    on_bound: impl FnOnce(SocketAddr),
) -> anyhow::Result<()> {
    let state = AppState::new(scorer, config.limits, config.open_store()?);
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
