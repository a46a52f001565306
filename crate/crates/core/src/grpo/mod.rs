//! Group relative policy optimization over the toy dual-head policy.
//!
//! Each step samples a group of responses per prompt, scores them through a
//! [`RewardClient`], normalizes rewards within the group into advantages and
//! takes one optimizer step on the clipped surrogate minus a reference-KL
//! penalty. Prompts that carry MOS targets also contribute an auxiliary
//! Huber term on the regression head.

mod advantage;
mod client;
mod objective;
mod trainer;

pub use advantage::{compute_advantages, weighted_reward, weighted_reward_with, RewardScores, REWARD_WEIGHTS};
pub use client::{HttpRewardClient, InProcessRewardClient, RewardClient};
pub use objective::{grpo_loss, GroupRollout, GrpoLossReport, KlEstimator, ResponseRollout};
pub use trainer::{collect_group, is_mos_slot, train_grpo, GrpoRun, GrpoTelemetry, PromptMixer, PromptRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::LossError;
use crate::model::{ModelError, OptimizerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrpoError {
    #[error("invalid GRPO config: {0}")]
    InvalidConfig(String),
    #[error("prompt manifest is empty")]
    EmptyManifest,
    #[error("mix ratio {mos}:{pure} needs {missing} prompts but the manifest has none")]
    RatioInfeasible { mos: usize, pure: usize, missing: &'static str },
    #[error("reward unavailable for prompt {prompt_id}: {message}")]
    RewardUnavailable { prompt_id: String, message: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub kl_estimator: KlEstimator,
    pub reward_weights: [f64; 3],
    /// MOS-bearing : pure prompts per cycle.
    pub mix_mos: usize,
    pub mix_pure: usize,
    pub max_prompt_len: usize,
    pub max_completion_len: usize,
    pub lambda_grpo: f64,
    pub lambda_mos: f64,
    pub eps_std: f64,
    pub huber_delta: f64,
    pub prompts_per_step: usize,
    pub steps: usize,
    pub probe_every: usize,
    /// Optimizer passes over each rollout batch.
    pub inner_epochs: usize,
    pub stop_token: Option<u32>,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 4,
            temperature: 0.9,
            top_p: 0.95,
            clip_eps: 0.2,
            kl_beta: 0.04,
            kl_estimator: KlEstimator::K3,
            reward_weights: REWARD_WEIGHTS,
            mix_mos: 7,
            mix_pure: 3,
            max_prompt_len: 3072,
            max_completion_len: 768,
            lambda_grpo: 1.0,
            lambda_mos: 10.0,
            eps_std: 1e-6,
            huber_delta: 1.0,
            prompts_per_step: 4,
            steps: 500,
            probe_every: 50,
            inner_epochs: 1,
            stop_token: Some(crate::model::vocab::EOS),
            optimizer: OptimizerConfig { lr: 1e-3, weight_decay: 0.0, ..OptimizerConfig::default() },
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: String| Err(GrpoError::InvalidConfig(m));
        if self.group_size < 2 {
            return bad(format!("group_size must be at least 2, got {}", self.group_size));
        }
        if !(self.kl_beta >= 0.0) {
            return bad(format!("kl_beta must be non-negative, got {}", self.kl_beta));
        }
        if !(self.clip_eps > 0.0) {
            return bad(format!("clip_eps must be positive, got {}", self.clip_eps));
        }
        let sum: f64 = self.reward_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.reward_weights.iter().any(|w| *w < 0.0) {
            return bad(format!("reward weights must be non-negative and sum to 1, got {:?}", self.reward_weights));
        }
        if self.mix_mos + self.mix_pure == 0 {
            return bad("mix ratio is 0:0".into());
        }
        if self.prompts_per_step == 0 || self.inner_epochs == 0 || self.max_completion_len == 0 {
            return bad("prompts_per_step, inner_epochs and max_completion_len must be positive".into());
        }
        if !(self.lambda_grpo >= 0.0 && self.lambda_mos >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        Ok(())
    }
}
