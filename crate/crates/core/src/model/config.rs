use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyBackboneConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl Default for ToyBackboneConfig {
    fn default() -> Self {
        ToyBackboneConfig { vocab_size: 64, hidden_size: 32, layers: 2, heads: 2, max_seq_len: 256, seed: 0 }
    }
}

impl ToyBackboneConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let c = self;
        if c.vocab_size == 0 || c.hidden_size == 0 || c.layers == 0 || c.heads == 0 || c.max_seq_len == 0 {
            return Err(ModelError::InvalidConfig("all sizes must be positive".into()));
        }
        if !c.hidden_size.is_multiple_of(c.heads) {
            return Err(ModelError::InvalidConfig(format!(
                "hidden size {} is not divisible by {} heads",
                c.hidden_size, c.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.heads
    }

    pub fn mlp_dim(&self) -> usize {
        4 * self.hidden_size
    }
}

/// Which regression head sits on the pooled state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadVariant {
    /// `h -> h/2 -> SiLU -> Dropout(0.1) -> 3`, scoring edited images.
    Evaluator,
    /// `h -> h/4 -> SiLU -> Dropout(0.15) -> 3`, scoring critiques.
    Reward,
}

impl HeadVariant {
    pub fn inner_dim(self, hidden: usize) -> usize {
        match self {
            HeadVariant::Evaluator => (hidden / 2).max(1),
            HeadVariant::Reward => (hidden / 4).max(1),
        }
    }

    pub fn dropout(self) -> f64 {
        match self {
            HeadVariant::Evaluator => 0.1,
            HeadVariant::Reward => 0.15,
        }
    }
}
