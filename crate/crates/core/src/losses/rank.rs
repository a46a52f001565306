//! Margin-softplus pairwise ranking over the batch and a history queue.
//!
//! A pair `(i, j)` is valid when `|y_i - y_j| > label_margin`. With
//! `d = sign(y_i - y_j)` its penalty is `softplus(m - d * (s_i - s_j))`, so
//! correctly ordered pairs with a score gap well above `m` cost almost
//! nothing. Batch-batch pairs are counted once (`i < j`); batch-queue pairs
//! only carry gradient into the batch side.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{HistoryQueue, LossError, LossReport};
use crate::util::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankLossConfig {
    pub label_margin: f64,
    pub score_margin: f64,
    /// Pairs per step; above this a seeded subset is used.
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for RankLossConfig {
    fn default() -> Self {
        RankLossConfig { label_margin: 0.03, score_margin: 0.03, max_pairs: 4096, seed: 0 }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy)]
enum Other {
    Batch(usize),
    Queue(f64, f64),
}

/// Pure evaluation against a queue snapshot. `step` only feeds the pair
/// subsampling seed.
pub fn rank_loss(
    preds: &[f64],
    targets: &[f64],
    queue: &HistoryQueue,
    config: &RankLossConfig,
    step: u64,
) -> Result<LossReport, LossError> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(LossError::ShapeMismatch(format!(
            "preds has {} elements, targets {}",
            preds.len(),
            targets.len()
        )));
    }
    let mut pairs: Vec<(usize, Other)> = Vec::new();
    for i in 0..preds.len() {
        for j in i + 1..preds.len() {
            if (targets[i] - targets[j]).abs() > config.label_margin {
                pairs.push((i, Other::Batch(j)));
            }
        }
        for &(qp, qt) in queue.iter() {
            if (targets[i] - qt).abs() > config.label_margin {
                pairs.push((i, Other::Queue(qp, qt)));
            }
        }
    }
    if pairs.len() > config.max_pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ splitmix64(step)));
        let mut keep = sample(&mut rng, pairs.len(), config.max_pairs).into_vec();
        keep.sort_unstable();
        pairs = keep.into_iter().map(|k| pairs[k]).collect();
    }

    let mut grad = vec![0.0; preds.len()];
    if pairs.is_empty() {
        return Ok(LossReport::new(0.0, grad));
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    for (i, other) in pairs {
        let (s_j, y_j) = match other {
            Other::Batch(j) => (preds[j], targets[j]),
            Other::Queue(p, t) => (p, t),
        };
        let d = (targets[i] - y_j).signum();
        let arg = config.score_margin - d * (preds[i] - s_j);
        value += softplus(arg);
        let slope = sigmoid(arg) * scale;
        grad[i] -= d * slope;
        if let Other::Batch(j) = other {
            grad[j] += d * slope;
        }
    }
    Ok(LossReport::new(value * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::fd;
    use crate::util::relative_error;
    use rand::{Rng, SeedableRng};

    #[test]
    fn no_valid_pairs() {
        let r = rank_loss(&[0.1, 0.9], &[0.50, 0.52], &HistoryQueue::new(4), &RankLossConfig::default(), 0).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn tied_scores_cost_softplus_margin() {
        let r = rank_loss(&[0.4, 0.4], &[1.0, 0.5], &HistoryQueue::new(4), &RankLossConfig::default(), 0).unwrap();
        assert!((r.value - softplus(0.03)).abs() < 1e-15);
        assert!((r.value - 0.708_259_676_341_448_5).abs() < 1e-10);
    }

    #[test]
    fn decreasing_in_correct_gap() {
        let cfg = RankLossConfig::default();
        let values: Vec<f64> = [0.0, 1.0, 2.0, 4.0]
            .iter()
            .map(|gap| rank_loss(&[*gap, 0.0], &[1.0, 0.0], &HistoryQueue::new(1), &cfg, 0).unwrap().value)
            .collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn queue_pairs_only_move_batch_side() {
        let mut q = HistoryQueue::new(8);
        q.push(0.0, 0.0);
        let r = rank_loss(&[0.0], &[1.0], &q, &RankLossConfig::default(), 0).unwrap();
        assert!((r.value - softplus(0.03)).abs() < 1e-15);
        assert!(r.grad[0] < 0.0);
    }

    #[test]
    fn swapping_pair_roles_is_neutral() {
        let cfg = RankLossConfig::default();
        let q = HistoryQueue::new(1);
        let a = rank_loss(&[0.3, -0.2, 0.8], &[0.1, 0.9, 0.4], &q, &cfg, 0).unwrap();
        let b = rank_loss(&[0.8, -0.2, 0.3], &[0.4, 0.9, 0.1], &q, &cfg, 0).unwrap();
        assert!((a.value - b.value).abs() < 1e-15);
    }

    #[test]
    fn pair_cap_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let preds: Vec<f64> = (0..40).map(|_| rng.gen()).collect();
        let targets: Vec<f64> = (0..40).map(|_| rng.gen()).collect();
        let mut q = HistoryQueue::new(200);
        for _ in 0..200 {
            q.push(rng.gen(), rng.gen());
        }
        let cfg = RankLossConfig { max_pairs: 100, ..Default::default() };
        let a = rank_loss(&preds, &targets, &q, &cfg, 3).unwrap();
        let b = rank_loss(&preds, &targets, &q, &cfg, 3).unwrap();
        assert_eq!(a, b);
        let g = fd::gradient(&preds, 1e-5, |x| rank_loss(x, &targets, &q, &cfg, 3).unwrap().value);
        assert!(relative_error(&a.grad, &g) < 1e-4);
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
    }
}
