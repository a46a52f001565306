//! Screening for annotators who give uniformly high scores.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub var_threshold: f64,
    pub mean_threshold: f64,
    pub min_records: usize,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig { var_threshold: 0.25, mean_threshold: 4.5, min_records: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasVerdict {
    Flagged,
    Clear,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub verdict: BiasVerdict,
    pub n: usize,
    pub mean: f64,
    /// Population variance on the 1-5 scale.
    pub variance: f64,
    /// Fraction of scores equal to 5.
    pub share_of_max: f64,
}

pub fn detect_bias(scores: &[u8], config: BiasConfig) -> BiasReport {
    let n = scores.len();
    let (mean, variance, share_of_max) = if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let nf = n as f64;
        let mean = scores.iter().map(|&s| f64::from(s)).sum::<f64>() / nf;
        let variance = scores.iter().map(|&s| (f64::from(s) - mean).powi(2)).sum::<f64>() / nf;
        let share = scores.iter().filter(|&&s| s == 5).count() as f64 / nf;
        (mean, variance, share)
    };
    let verdict = if n < config.min_records {
        BiasVerdict::InsufficientData
    } else if variance < config.var_threshold && mean > config.mean_threshold {
        BiasVerdict::Flagged
    } else {
        BiasVerdict::Clear
    };
    BiasReport { verdict, n, mean, variance, share_of_max }
}
