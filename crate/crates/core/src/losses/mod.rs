//! Loss functions with analytic gradients.
//!
//! Every loss returns a [`LossReport`]: the scalar value and its gradient with
//! respect to the prediction vector that was passed in.

mod composite;
mod cross_entropy;
mod plcc;
mod queue;
mod rank;
mod regression;

pub use composite::{
    composite_rm_loss, grpo_total_loss, joint_sft_loss, CompositeBreakdown, LossWeights,
    RewardModelObjective,
};
pub use cross_entropy::{cross_entropy, log_softmax};
pub use plcc::plcc_loss;
pub use queue::HistoryQueue;
pub use rank::{rank_loss, softplus, RankLossConfig};
pub use regression::huber;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask selects no positions")]
    EmptyMask,
    #[error("huber delta must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("loss weight {name} must be non-negative, got {value}")]
    NegativeWeight { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossReport {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Set when the loss fell back to a neutral value on degenerate input
    /// (for example a zero-variance PLCC window).
    pub degenerate: bool,
}

impl LossReport {
    pub fn new(value: f64, grad: Vec<f64>) -> Self {
        LossReport { value, grad, degenerate: false }
    }

    pub fn scaled(&self, w: f64) -> LossReport {
        LossReport {
            value: w * self.value,
            grad: self.grad.iter().map(|g| w * g).collect(),
            degenerate: self.degenerate,
        }
    }
}

#[cfg(test)]
pub(crate) mod fd {
    /// Central finite-difference gradient.
    pub fn gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let mut xs = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = xs[i];
                xs[i] = orig + h;
                let up = f(&xs);
                xs[i] = orig - h;
                let down = f(&xs);
                xs[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}
