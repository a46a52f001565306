//! Reward clients speak the scoring endpoint's batch contract, either in
//! process or over HTTP.

use std::time::Duration;

use super::{RewardScores, REWARD_WEIGHTS};
use crate::service::backend::{post_score_batch, Scorer};
use crate::service::schema::{ItemResult, ScoreItem};

pub trait RewardClient {
    fn score(&self, items: &[ScoreItem]) -> Result<Vec<RewardScores>, String>;
}

/// Wraps a [`Scorer`] and applies the fixed dimension weights locally.
pub struct InProcessRewardClient<S: Scorer> {
    pub scorer: S,
}

impl<S: Scorer> RewardClient for InProcessRewardClient<S> {
    fn score(&self, items: &[ScoreItem]) -> Result<Vec<RewardScores>, String> {
        let dims = self.scorer.score(items).map_err(|e| e.to_string())?;
        Ok(dims.into_iter().map(|d| RewardScores::new(d, REWARD_WEIGHTS)).collect())
    }
}

/// Posts batches to `{base_url}/v1/score` and uses the server's reward.
pub struct HttpRewardClient {
    pub base_url: String,
    pub timeout: Duration,
}

impl HttpRewardClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpRewardClient { base_url: base_url.into(), timeout: Duration::from_secs(30) }
    }
}

impl RewardClient for HttpRewardClient {
    fn score(&self, items: &[ScoreItem]) -> Result<Vec<RewardScores>, String> {
        let resp = post_score_batch(&self.base_url, items, self.timeout).map_err(|e| e.to_string())?;
        resp.items
            .into_iter()
            .enumerate()
            .map(|(i, r)| match r {
                ItemResult::Scored(s) => Ok(RewardScores { s_log: s.logicality, s_acc: s.accuracy, s_use: s.usefulness, reward: s.reward }),
                ItemResult::Invalid(e) => Err(format!("item {i} rejected: {}", e.error)),
            })
            .collect()
    }
}
