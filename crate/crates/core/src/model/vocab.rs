//! Token layout for toy mode, synthetic training data and text encoding.
//!
//! Ids below [`CONTENT_START`] are reserved: control tokens, the critique
//! section markers and eleven score-bin tokens for `0.0, 0.1, ..., 1.0`.
//! Text and image references are hashed into the content range.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::stable_hash;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
/// Closes the prompt; its hidden state is the prefill pooling position.
pub const SEP: u32 = 2;
pub const EOS: u32 = 3;
/// Marks the score line inside a generated critique.
pub const ANCHOR: u32 = 4;
pub const SECTION_MARKERS: [u32; 3] = [5, 6, 7];
pub const SCORE_BIN_START: u32 = 8;
pub const SCORE_BINS: u32 = 11;
pub const CONTENT_START: u32 = 20;

pub fn score_bin_token(score: f64) -> u32 {
    SCORE_BIN_START + (score.clamp(0.0, 1.0) * f64::from(SCORE_BINS - 1)).round() as u32
}

/// Inverse of [`score_bin_token`]; `None` for non-bin tokens.
pub fn score_bin_value(token: u32) -> Option<f64> {
    (SCORE_BIN_START..SCORE_BIN_START + SCORE_BINS)
        .contains(&token)
        .then(|| f64::from(token - SCORE_BIN_START) / f64::from(SCORE_BINS - 1))
}

/// Hashes a whitespace-separated word into the content range.
pub fn word_token(word: &str, vocab: usize) -> u32 {
    let span = (vocab as u64).saturating_sub(u64::from(CONTENT_START)).max(1);
    CONTENT_START + (stable_hash(0, word) % span) as u32
}

/// `BOS`, one token per labelled field word, then `SEP`, truncated to fit
/// `max_len`. Image references are hashed like words so that identical
/// references map to identical tokens.
pub fn encode_prompt(fields: &[(&str, &str)], vocab: usize, max_len: usize) -> Vec<u32> {
    let mut out = vec![BOS];
    let room = max_len.saturating_sub(2);
    'outer: for (label, text) in fields {
        for word in std::iter::once(*label).chain(text.split_whitespace()) {
            if out.len() > room {
                break 'outer;
            }
            out.push(word_token(&word.to_lowercase(), vocab));
        }
    }
    out.push(SEP);
    out
}

/// Text form of a token id, used when generated tokens travel as critique text.
pub fn token_word(token: u32) -> String {
    format!("t{token}")
}

pub fn decode_tokens(tokens: &[u32]) -> String {
    tokens.iter().map(|&t| token_word(t)).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftSample {
    pub prompt: Vec<u32>,
    /// Target critique tokens; `None` for score-only samples.
    pub response: Option<Vec<u32>>,
    pub targets: [f64; 3],
}

impl SftSample {
    pub fn has_cot(&self) -> bool {
        self.response.as_ref().is_some_and(|r| !r.is_empty())
    }
}

const DEFAULT_ALPHABET: u32 = 16;

/// Generator of prompts whose three targets are fixed linear functions of
/// the prompt's bag of tokens (the mean of per-token 0/1 weights), with a
/// templated critique ending in the quantized scores.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub vocab: usize,
    pub prompt_words: usize,
    /// Prompt words are drawn from the first `alphabet` content tokens.
    pub alphabet: u32,
    weights: Vec<[f64; 3]>,
}

impl SyntheticTask {
    pub fn new(vocab: usize, prompt_words: usize, weight_seed: u64) -> Self {
        assert!(vocab as u32 > CONTENT_START, "vocab too small for synthetic data");
        let mut rng = ChaCha8Rng::seed_from_u64(weight_seed);
        let weights = (CONTENT_START as usize..vocab).map(|_| [0; 3].map(|_: u8| if rng.gen() { 1.0 } else { 0.0 })).collect();
        let alphabet = (vocab as u32 - CONTENT_START).min(DEFAULT_ALPHABET);
        SyntheticTask { vocab, prompt_words, alphabet, weights }
    }

    pub fn with_alphabet(mut self, alphabet: u32) -> Self {
        self.alphabet = alphabet.clamp(1, self.vocab as u32 - CONTENT_START);
        self
    }

    pub fn targets(&self, prompt: &[u32]) -> [f64; 3] {
        let content: Vec<usize> = prompt
            .iter()
            .filter(|&&t| t >= CONTENT_START && (t as usize) < self.vocab)
            .map(|&t| (t - CONTENT_START) as usize)
            .collect();
        let mut out = [0.0; 3];
        for &c in &content {
            for (o, w) in out.iter_mut().zip(&self.weights[c]) {
                *o += w;
            }
        }
        let n = content.len().max(1) as f64;
        out.map(|v| v / n)
    }

    pub fn prompt<R: Rng>(&self, rng: &mut R) -> Vec<u32> {
        let mut p = vec![BOS];
        p.extend((0..self.prompt_words).map(|_| rng.gen_range(CONTENT_START..CONTENT_START + self.alphabet)));
        p.push(SEP);
        p
    }

    pub fn critique(targets: [f64; 3]) -> Vec<u32> {
        let mut r = SECTION_MARKERS.to_vec();
        r.push(ANCHOR);
        r.extend(targets.iter().map(|&s| score_bin_token(s)));
        r.push(EOS);
        r
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, with_cot: bool) -> SftSample {
        let prompt = self.prompt(rng);
        let targets = self.targets(&prompt);
        SftSample { response: with_cot.then(|| Self::critique(targets)), prompt, targets }
    }

    /// `n_cot` critique samples followed by `n_score_only`, shuffled.
    pub fn dataset(&self, n_cot: usize, n_score_only: usize, seed: u64) -> Vec<SftSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<SftSample> = (0..n_cot + n_score_only).map(|i| self.sample(&mut rng, i < n_cot)).collect();
        out.shuffle(&mut rng);
        out
    }
}
