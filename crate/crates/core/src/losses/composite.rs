//! Weighted combinations: the reward-model objective, the joint SFT loss and
//! the GRPO total with auxiliary MOS regression.

use serde::{Deserialize, Serialize};

use super::{huber, plcc_loss, rank_loss, HistoryQueue, LossError, LossReport, RankLossConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rm_huber: f64,
    pub rm_rank: f64,
    pub rm_plcc: f64,
    pub sft_ce: f64,
    pub sft_huber: f64,
    pub grpo: f64,
    pub mos: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            rm_huber: 4.0,
            rm_rank: 0.05,
            rm_plcc: 0.05,
            sft_ce: 1.0,
            sft_huber: 10.0,
            grpo: 1.0,
            mos: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LossError> {
        let named = [
            ("rm_huber", self.rm_huber),
            ("rm_rank", self.rm_rank),
            ("rm_plcc", self.rm_plcc),
            ("sft_ce", self.sft_ce),
            ("sft_huber", self.sft_huber),
            ("grpo", self.grpo),
            ("mos", self.mos),
        ];
        for (name, value) in named {
            if !(value >= 0.0) {
                return Err(LossError::NegativeWeight { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeBreakdown {
    pub total: LossReport,
    pub huber: LossReport,
    pub rank: LossReport,
    pub plcc: LossReport,
}

/// `w_huber * huber + w_rank * rank + w_plcc * plcc` against queue snapshots.
#[allow(clippy::too_many_arguments)]
pub fn composite_rm_loss(
    pred: &[f64],
    target: &[f64],
    rank_queue: &HistoryQueue,
    plcc_queue: &HistoryQueue,
    weights: &LossWeights,
    huber_delta: f64,
    rank_config: &RankLossConfig,
    step: u64,
) -> Result<CompositeBreakdown, LossError> {
    weights.validate()?;
    let h = huber(pred, target, huber_delta)?;
    let r = rank_loss(pred, target, rank_queue, rank_config, step)?;
    let p = plcc_loss(pred, target, plcc_queue)?;
    let grad = (0..pred.len())
        .map(|i| weights.rm_huber * h.grad[i] + weights.rm_rank * r.grad[i] + weights.rm_plcc * p.grad[i])
        .collect();
    let total = LossReport {
        value: weights.rm_huber * h.value + weights.rm_rank * r.value + weights.rm_plcc * p.value,
        grad,
        degenerate: p.degenerate,
    };
    Ok(CompositeBreakdown { total, huber: h, rank: r, plcc: p })
}

/// Reward-model objective for one score column, owning its history queues.
#[derive(Debug, Clone)]
pub struct RewardModelObjective {
    pub weights: LossWeights,
    pub huber_delta: f64,
    pub rank_config: RankLossConfig,
    pub rank_queue: HistoryQueue,
    pub plcc_queue: HistoryQueue,
    step: u64,
}

impl Default for RewardModelObjective {
    fn default() -> Self {
        RewardModelObjective {
            weights: LossWeights::default(),
            huber_delta: 1.0,
            rank_config: RankLossConfig::default(),
            rank_queue: HistoryQueue::new(4096),
            plcc_queue: HistoryQueue::new(256),
            step: 0,
        }
    }
}

impl RewardModelObjective {
    /// Evaluates against the current queues, then pushes the batch into both
    /// queues as detached snapshots.
    pub fn step(&mut self, pred: &[f64], target: &[f64]) -> Result<CompositeBreakdown, LossError> {
        let out = composite_rm_loss(
            pred,
            target,
            &self.rank_queue,
            &self.plcc_queue,
            &self.weights,
            self.huber_delta,
            &self.rank_config,
            self.step,
        )?;
        self.rank_queue.push_batch(pred, target);
        self.plcc_queue.push_batch(pred, target);
        self.step += 1;
        Ok(out)
    }
}

/// `w_ce * ce + w_huber * huber`. Score-only samples pass `ce = None` and
/// contribute only the regression term. The gradient is the concatenation
/// of the scaled CE gradient (if any) and the scaled Huber gradient.
pub fn joint_sft_loss(ce: Option<&LossReport>, huber: &LossReport, weights: &LossWeights) -> LossReport {
    let mut grad = Vec::new();
    let mut value = weights.sft_huber * huber.value;
    if let Some(ce) = ce {
        value += weights.sft_ce * ce.value;
        grad.extend(ce.grad.iter().map(|g| weights.sft_ce * g));
    }
    grad.extend(huber.grad.iter().map(|g| weights.sft_huber * g));
    LossReport { value, grad, degenerate: false }
}

/// `w_grpo * grpo + w_mos * huber`; prompts without MOS pass `mos = None`.
pub fn grpo_total_loss(grpo: &LossReport, mos: Option<&LossReport>, weights: &LossWeights) -> LossReport {
    let mut out = grpo.scaled(weights.grpo);
    if let Some(m) = mos {
        out.value += weights.mos * m.value;
        out.grad.extend(m.grad.iter().map(|g| weights.mos * g));
    }
    out
}
