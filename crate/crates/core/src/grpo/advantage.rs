use serde::{Deserialize, Serialize};

/// Logicality, accuracy, usefulness.
pub const REWARD_WEIGHTS: [f64; 3] = [0.3, 0.4, 0.3];

pub fn weighted_reward(s: [f64; 3]) -> f64 {
    weighted_reward_with(s, REWARD_WEIGHTS)
}

pub fn weighted_reward_with(s: [f64; 3], w: [f64; 3]) -> f64 {
    w[0] * s[0] + w[1] * s[1] + w[2] * s[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScores {
    pub s_log: f64,
    pub s_acc: f64,
    pub s_use: f64,
    pub reward: f64,
}

impl RewardScores {
    pub fn new(s: [f64; 3], weights: [f64; 3]) -> Self {
        RewardScores { s_log: s[0], s_acc: s[1], s_use: s[2], reward: weighted_reward_with(s, weights) }
    }
}

/// Group-normalized advantages with population standard deviation; all zero
/// when the spread is below `eps_std`.
pub fn compute_advantages(rewards: &[f64], eps_std: f64) -> Vec<f64> {
    let n = rewards.len() as f64;
    if rewards.is_empty() {
        return Vec::new();
    }
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
    if !(std >= eps_std) {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| (r - mean) / std).collect()
}
