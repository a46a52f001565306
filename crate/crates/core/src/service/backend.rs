//! Pluggable scorers behind the reward endpoint.

use std::time::Duration;

use thiserror::Error;

use super::schema::{ItemResult, ScoreItem, ScoreResponse};
use crate::model::vocab::encode_prompt;
use crate::model::DualHeadModel;
use crate::util::{stable_hash, unit_interval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("scoring backend unavailable: {0}")]
    Unavailable(String),
    #[error("scoring backend returned a malformed response: {0}")]
    Malformed(String),
}

/// Maps a batch of validated items to `[logicality, accuracy, usefulness]`
/// triples, in order.
pub trait Scorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, items: &[ScoreItem]) -> Result<Vec<[f64; 3]>, BackendError>;
}

/// Deterministic feature-hash scorer for tests and demos: each dimension is
/// the mean of per-word hash values of the critique, in `[0, 1)`.
#[derive(Debug, Clone, Default)]
pub struct HashScorer {
    pub salt: u64,
}

impl Scorer for HashScorer {
    fn name(&self) -> &str {
        "hash"
    }

    fn score(&self, items: &[ScoreItem]) -> Result<Vec<[f64; 3]>, BackendError> {
        Ok(items
            .iter()
            .map(|it| {
                let words: Vec<&str> = it.critic.split_whitespace().collect();
                let mut out = [0.0; 3];
                for (d, o) in out.iter_mut().enumerate() {
                    let seed = self.salt ^ (d as u64 + 1);
                    let sum: f64 = words.iter().map(|w| unit_interval(stable_hash(seed, w))).sum();
                    *o = sum / words.len().max(1) as f64;
                }
                out
            })
            .collect())
    }
}

/// Returns the same triple for every item.
#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub [f64; 3]);

impl Scorer for ConstantScorer {
    fn name(&self) -> &str {
        "constant"
    }

    fn score(&self, items: &[ScoreItem]) -> Result<Vec<[f64; 3]>, BackendError> {
        Ok(vec![self.0; items.len()])
    }
}

/// Scores each dimension as the fraction of critique words equal to `target`.
#[derive(Debug, Clone)]
pub struct TargetWordScorer {
    pub target: String,
}

impl Scorer for TargetWordScorer {
    fn name(&self) -> &str {
        "target_word"
    }

    fn score(&self, items: &[ScoreItem]) -> Result<Vec<[f64; 3]>, BackendError> {
        Ok(items
            .iter()
            .map(|it| {
                let (hits, total) = it
                    .critic
                    .split_whitespace()
                    .fold((0usize, 0usize), |(h, n), w| (h + usize::from(w == self.target), n + 1));
                let f = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
                [f; 3]
            })
            .collect())
    }
}

/// Reward-variant dual-head model; the prompt encodes all four fields.
#[derive(Debug, Clone)]
pub struct ModelScorer {
    pub model: DualHeadModel,
}

impl ModelScorer {
    pub fn encode(&self, item: &ScoreItem) -> Vec<u32> {
        let c = &self.model.config;
        encode_prompt(
            &[
                ("source", &item.source_image),
                ("edited", &item.edited_image),
                ("instruction", &item.instruction),
                ("critic", &item.critic),
            ],
            c.vocab_size,
            c.max_seq_len,
        )
    }
}

impl Scorer for ModelScorer {
    fn name(&self) -> &str {
        "model"
    }

    fn score(&self, items: &[ScoreItem]) -> Result<Vec<[f64; 3]>, BackendError> {
        items
            .iter()
            .map(|it| self.model.score(&self.encode(it)).map_err(|e| BackendError::Malformed(e.to_string())))
            .collect()
    }
}

/// Forwards batches to another server speaking the same `/v1/score` schema.
#[derive(Debug, Clone)]
pub struct ProxyScorer {
    pub base_url: String,
    pub timeout: Duration,
}

impl ProxyScorer {
    pub fn new(base_url: impl Into<String>) -> Self {
        ProxyScorer { base_url: base_url.into(), timeout: Duration::from_secs(30) }
    }
}

/// Sends one batch to `{base_url}/v1/score` and decodes the per-item results.
pub fn post_score_batch(base_url: &str, items: &[ScoreItem], timeout: Duration) -> Result<ScoreResponse, BackendError> {
    let url = format!("{}/v1/score", base_url.trim_end_matches('/'));
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent
        .post(&url)
        .send_json(serde_json::json!({ "items": items }))
        .map_err(|e| BackendError::Unavailable(format!("{url}: {e}")))?;
    let status = resp.status().as_u16();
    if status == 503 || status >= 500 {
        return Err(BackendError::Unavailable(format!("{url}: status {status}")));
    }
    let body: ScoreResponse = resp
        .body_mut()
        .read_json()
        .map_err(|e| BackendError::Malformed(format!("{url}: status {status}: {e}")))?;
    if body.items.len() != items.len() {
        return Err(BackendError::Malformed(format!("{} results for {} items", body.items.len(), items.len())));
    }
    Ok(body)
}

impl Scorer for ProxyScorer {
    fn name(&self) -> &str {
        "proxy"
    }

    fn score(&self, items: &[ScoreItem]) -> Result<Vec<[f64; 3]>, BackendError> {
        post_score_batch(&self.base_url, items, self.timeout)?
            .items
            .into_iter()
            .map(|r| match r {
                ItemResult::Scored(s) => Ok(s.dims()),
                ItemResult::Invalid(e) => Err(BackendError::Malformed(format!("upstream rejected item: {}", e.error))),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(critic: &str) -> ScoreItem {
        ScoreItem { source_image: "s".into(), edited_image: "e".into(), instruction: "i".into(), critic: critic.into() }
    }

    #[test]
    fn hash_scorer_is_deterministic_and_bounded() {
        let s = HashScorer::default();
        let a = s.score(&[item("the edit is good"), item("the edit is good")]).unwrap();
        assert_eq!(a[0], a[1]);
        assert!(a[0].iter().all(|v| (0.0..1.0).contains(v)));
        assert_ne!(a[0], s.score(&[item("different words here")]).unwrap()[0]);
    }

    #[test]
    fn target_word_fraction() {
        let s = TargetWordScorer { target: "t9".into() };
        assert_eq!(s.score(&[item("t9 t1 t9 t2")]).unwrap()[0], [0.5; 3]);
        assert_eq!(s.score(&[item(" ")]).unwrap()[0], [0.0; 3]);
    }

    #[test]
    fn proxy_to_closed_port_is_unavailable() {
        let p = ProxyScorer { base_url: "http://127.0.0.1:9".into(), timeout: Duration::from_millis(500) };
        assert!(matches!(p.score(&[item("x")]), Err(BackendError::Unavailable(_))));
    }
}
