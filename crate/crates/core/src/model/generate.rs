//! Nucleus sampling with per-token log-probabilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DualHeadModel, ModelError};
use crate::losses::log_softmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_new: usize,
    /// Generation stops after emitting this token.
    pub stop_token: Option<u32>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { temperature: 0.9, top_p: 0.95, max_new: 16, stop_token: None }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.temperature > 0.0) {
            return Err(ModelError::InvalidSampling(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ModelError::InvalidSampling(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Generated tokens only (the prompt is not repeated).
    pub tokens: Vec<u32>,
    /// Log-probability of each generated token under the full
    /// temperature-scaled softmax, before nucleus truncation.
    pub logprobs: Vec<f64>,
}

/// Log-probabilities of `logits / temperature`.
pub fn tempered_log_softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    log_softmax(&scaled)
}

/// Draws one token from the nucleus of `logprobs` (already tempered).
pub fn sample_nucleus<R: Rng>(logprobs: &[f64], top_p: f64, rng: &mut R) -> usize {
    let mut order: Vec<usize> = (0..logprobs.len()).collect();
    order.sort_by(|&a, &b| logprobs[b].total_cmp(&logprobs[a]).then(a.cmp(&b)));
    let mut kept = Vec::new();
    let mut mass = 0.0;
    for &i in &order {
        kept.push(i);
        mass += logprobs[i].exp();
        if mass >= top_p {
            break;
        }
    }
    let u = rng.gen::<f64>() * mass;
    let mut acc = 0.0;
    for &i in &kept {
        acc += logprobs[i].exp();
        if u < acc {
            return i;
        }
    }
    *kept.last().expect("nucleus is never empty")
}

/// Samples up to `config.max_new` tokens after `prompt`. The same seed
/// always yields the same continuation.
pub fn generate(model: &DualHeadModel, prompt: &[u32], config: &SamplingConfig, seed: u64) -> Result<Generation, ModelError> {
    config.validate()?;
    if prompt.is_empty() {
        return Err(ModelError::EmptyPrompt);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seq = prompt.to_vec();
    let mut out = Generation { tokens: Vec::new(), logprobs: Vec::new() };
    while out.tokens.len() < config.max_new && seq.len() < model.config.max_seq_len {
        let logits = model.next_token_logits(&seq)?;
        let lp = tempered_log_softmax(&logits, config.temperature);
        let tok = sample_nucleus(&lp, config.top_p, &mut rng);
        out.tokens.push(tok as u32);
        out.logprobs.push(lp[tok]);
        seq.push(tok as u32);
        if config.stop_token == Some(tok as u32) {
            break;
        }
    }
    Ok(out)
}

/// Per-token log-probabilities of `response` given `prompt`, under the same
/// tempered full softmax that [`generate`] reports.
pub fn sequence_logprobs(model: &DualHeadModel, prompt: &[u32], response: &[u32], temperature: f64) -> Result<Vec<f64>, ModelError> {
    let mut seq = prompt.to_vec();
    seq.extend_from_slice(response);
    let out = model.forward(&seq, prompt.len())?;
    let v = model.config.vocab_size;
    Ok(response
        .iter()
        .enumerate()
        .map(|(i, &tok)| {
            let t = prompt.len() - 1 + i;
            tempered_log_softmax(&out.lm_logits[t * v..(t + 1) * v], temperature)[tok as usize]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HeadVariant, ToyBackboneConfig};

    fn model() -> DualHeadModel {
        let cfg = ToyBackboneConfig { vocab_size: 12, hidden_size: 8, layers: 1, heads: 2, max_seq_len: 32, seed: 1 };
        DualHeadModel::new(cfg, HeadVariant::Evaluator).unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let m = model();
        let cfg = SamplingConfig { max_new: 10, ..Default::default() };
        assert_eq!(generate(&m, &[1, 2], &cfg, 5).unwrap(), generate(&m, &[1, 2], &cfg, 5).unwrap());
    }

    #[test]
    fn logprobs_match_rescoring() {
        let m = model();
        let cfg = SamplingConfig { max_new: 8, ..Default::default() };
        let g = generate(&m, &[1, 2, 3], &cfg, 11).unwrap();
        let lp = sequence_logprobs(&m, &[1, 2, 3], &g.tokens, cfg.temperature).unwrap();
        for (a, b) in lp.iter().zip(&g.logprobs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn near_zero_temperature_is_greedy() {
        let m = model();
        let cfg = SamplingConfig { temperature: 1e-3, top_p: 0.95, max_new: 1, stop_token: None };
        let logits = m.next_token_logits(&[4, 5]).unwrap();
        let argmax = (0..logits.len()).max_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap() as u32;
        for seed in 0..200 {
            assert_eq!(generate(&m, &[4, 5], &cfg, seed).unwrap().tokens, vec![argmax]);
        }
    }

    #[test]
    fn nucleus_excludes_tail() {
        let lp: Vec<f64> = [0.6f64, 0.3, 0.06, 0.04].iter().map(|p| p.ln()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            assert!(sample_nucleus(&lp, 0.85, &mut rng) < 2);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let m = model();
        let bad = SamplingConfig { top_p: 0.0, ..Default::default() };
        assert!(matches!(generate(&m, &[1], &bad, 0), Err(ModelError::InvalidSampling(_))));
    }
}
