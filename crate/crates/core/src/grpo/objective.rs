//! Clipped surrogate with a per-token reference KL penalty.

use serde::{Deserialize, Serialize};

use super::{GrpoConfig, GrpoError, RewardScores};
use crate::losses::LossReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KlEstimator {
    /// `exp(ref - pol) - (ref - pol) - 1`; non-negative per token.
    #[default]
    K3,
    /// `pol - ref`.
    LogRatio,
}

impl KlEstimator {
    /// Value and derivative with respect to the policy log-prob.
    pub fn eval(self, policy: f64, reference: f64) -> (f64, f64) {
        match self {
            KlEstimator::K3 => {
                let x = reference - policy;
                let e = x.exp();
                (e - x - 1.0, 1.0 - e)
            }
            KlEstimator::LogRatio => (policy - reference, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRollout {
    pub tokens: Vec<u32>,
    pub logprob_policy: Vec<f64>,
    pub logprob_old: Vec<f64>,
    pub logprob_ref: Vec<f64>,
    pub scores: RewardScores,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub prompt_id: String,
    pub prompt: Vec<u32>,
    pub responses: Vec<ResponseRollout>,
}

impl GroupRollout {
    pub fn total_tokens(&self) -> usize {
        self.responses.iter().map(|r| r.tokens.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrpoLossReport {
    /// `-(surrogate - beta * kl)`. The gradient is with respect to every
    /// response's policy log-probs, concatenated in response order.
    pub loss: LossReport,
    pub surrogate: f64,
    pub kl: f64,
}

/// Surrogate and KL are averaged over each response's tokens, then over the
/// group. Empty responses contribute zero.
pub fn grpo_loss(rollout: &GroupRollout, config: &GrpoConfig) -> Result<GrpoLossReport, GrpoError> {
    let g = rollout.responses.len();
    if g == 0 {
        return Err(GrpoError::ShapeMismatch("rollout has no responses".into()));
    }
    let eps = config.clip_eps;
    let mut grad = Vec::with_capacity(rollout.total_tokens());
    let (mut surrogate, mut kl) = (0.0, 0.0);
    for (i, r) in rollout.responses.iter().enumerate() {
        let n = r.tokens.len();
        if r.logprob_policy.len() != n || r.logprob_old.len() != n || r.logprob_ref.len() != n {
            return Err(GrpoError::ShapeMismatch(format!(
                "response {i}: {n} tokens, {} policy / {} old / {} reference log-probs",
                r.logprob_policy.len(),
                r.logprob_old.len(),
                r.logprob_ref.len()
            )));
        }
        if n == 0 {
            continue;
        }
        let w = 1.0 / (n as f64 * g as f64);
        let a = r.advantage;
        for t in 0..n {
            let lp = r.logprob_policy[t];
            let ratio = (lp - r.logprob_old[t]).exp();
            let unclipped = ratio * a;
            let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * a;
            let (s, ds) = if unclipped <= clipped { (unclipped, ratio * a) } else { (clipped, 0.0) };
            let (k, dk) = config.kl_estimator.eval(lp, r.logprob_ref[t]);
            surrogate += w * s;
            kl += w * k;
            grad.push(-w * (ds - config.kl_beta * dk));
        }
    }
    let value = -(surrogate - config.kl_beta * kl);
    Ok(GrpoLossReport { loss: LossReport::new(value, grad), surrogate, kl })
}
