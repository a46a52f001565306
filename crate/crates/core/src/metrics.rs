//! Correlation and benchmark metrics: PLCC, SRCC, KRCC (tau-b), pairwise
//! accuracy and ROUGE-1.
//!
//! Degenerate inputs are reported as [`MetricError`], never as NaN.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 points, got {0}")]
    TooShort(usize),
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("series contains a non-finite value")]
    NonFinite,
    #[error("reference is empty")]
    EmptyReference,
    #[error("no input")]
    EmptyInput,
}

/// Paired predictions and targets of equal length `n >= 2`, all finite.
#[derive(Debug, Clone, Copy)]
pub struct ScorePairSeries<'a> {
    pub predictions: &'a [f64],
    pub targets: &'a [f64],
}

impl<'a> ScorePairSeries<'a> {
    pub fn new(predictions: &'a [f64], targets: &'a [f64]) -> Result<Self, MetricError> {
        if predictions.len() != targets.len() {
            return Err(MetricError::LengthMismatch(predictions.len(), targets.len()));
        }
        if predictions.len() < 2 {
            return Err(MetricError::TooShort(predictions.len()));
        }
        if predictions.iter().chain(targets).any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        Ok(ScorePairSeries { predictions, targets })
    }
}

fn is_constant(x: &[f64]) -> bool {
    x.iter().all(|&v| v == x[0])
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Pearson linear correlation coefficient.
pub fn plcc(pred: &[f64], target: &[f64]) -> Result<f64, MetricError> {
    let s = ScorePairSeries::new(pred, target)?;
    if is_constant(s.predictions) || is_constant(s.targets) {
        return Err(MetricError::ZeroVariance);
    }
    Ok(pearson_unchecked(s.predictions, s.targets))
}

/// 1-based ranks with ties replaced by the average of the ranks they span.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation (Pearson on midranks).
pub fn srcc(pred: &[f64], target: &[f64]) -> Result<f64, MetricError> {
    let s = ScorePairSeries::new(pred, target)?;
    if is_constant(s.predictions) || is_constant(s.targets) {
        return Err(MetricError::ZeroVariance);
    }
    Ok(pearson_unchecked(&midranks(s.predictions), &midranks(s.targets)))
}

/// Sum of t(t-1)/2 over runs of equal adjacent elements.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Merge sort that returns the number of inversions.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm).
pub fn krcc_tau_b(pred: &[f64], target: &[f64]) -> Result<f64, MetricError> {
    let s = ScorePairSeries::new(pred, target)?;
    let n = s.predictions.len();
    let mut pairs: Vec<(f64, f64)> = s.predictions.iter().copied().zip(s.targets.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let tie_x = tied_pairs(&xs);
    let tie_xy = tied_pairs(&pairs);

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(n);
    let swaps = count_inversions(&mut ys, &mut buf);
    let tie_y = tied_pairs(&ys);

    if tie_x == n0 || tie_y == n0 {
        return Err(MetricError::ZeroVariance);
    }
    // concordant - discordant = n0 - tx - ty + txy - 2 * swaps
    let numerator = n0 as i64 - tie_x as i64 - tie_y as i64 + tie_xy as i64 - 2 * swaps as i64;
    let denominator = (((n0 - tie_x) as f64) * ((n0 - tie_y) as f64)).sqrt();
    Ok((numerator as f64 / denominator).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub pred_a: f64,
    pub pred_b: f64,
    pub human_choice: Choice,
}

/// Fraction of preferences whose predicted ordering matches the human
/// choice. Exact prediction ties count as half a match.
pub fn pairwise_accuracy(prefs: &[Preference]) -> Result<f64, MetricError> {
    if prefs.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut hits = 0.0;
    for p in prefs {
        if !p.pred_a.is_finite() || !p.pred_b.is_finite() {
            return Err(MetricError::NonFinite);
        }
        hits += match (p.pred_a.partial_cmp(&p.pred_b), p.human_choice) {
            (Some(std::cmp::Ordering::Equal), _) => 0.5,
            (Some(std::cmp::Ordering::Greater), Choice::A) | (Some(std::cmp::Ordering::Less), Choice::B) => 1.0,
            _ => 0.0,
        };
    }
    Ok(hits / prefs.len() as f64)
}

/// Overall score used against single-score benchmarks: the mean of the
/// three dimension scores.
pub fn overall_from_dims(scores: [f64; 3]) -> f64 {
    (scores[0] + scores[1] + scores[2]) / 3.0
}

/// Whitespace tokenization with case folding.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

/// ROUGE-1 F1 between token multisets.
pub fn rouge1<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Result<f64, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *ref_counts.entry(t.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in candidate {
        if let Some(c) = ref_counts.get_mut(t.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return Ok(0.0);
    }
    let precision = overlap as f64 / candidate.len() as f64;
    let recall = overlap as f64 / reference.len() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plcc_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((plcc(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!((plcc(&x, &y).unwrap() + 1.0).abs() < 1e-15);
        assert!((plcc(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(plcc(&x, &[0.1; 4]), Err(MetricError::ZeroVariance));
        assert_eq!(plcc(&[1.0], &[1.0]), Err(MetricError::TooShort(1)));
        assert_eq!(plcc(&x, &[1.0]), Err(MetricError::LengthMismatch(4, 1)));
        assert_eq!(plcc(&[1.0, f64::NAN], &[1.0, 2.0]), Err(MetricError::NonFinite));
    }

    #[test]
    fn srcc_examples() {
        let x = [0.1, 0.5, 0.9, 2.0, 3.5];
        let y: Vec<f64> = x.iter().map(|v: &f64| v.exp() * 3.0).collect();
        assert_eq!(srcc(&x, &y).unwrap(), 1.0);
        let rev: Vec<f64> = x.iter().rev().copied().collect();
        assert_eq!(srcc(&x, &rev).unwrap(), -1.0);
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn krcc_examples() {
        assert_eq!(krcc_tau_b(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        let t = krcc_tau_b(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(krcc_tau_b(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricError::ZeroVariance));
    }

    #[test]
    fn pairwise_accuracy_examples() {
        let p = |a, b, c| Preference { pred_a: a, pred_b: b, human_choice: c };
        assert_eq!(pairwise_accuracy(&[p(1.0, 0.0, Choice::A), p(0.0, 1.0, Choice::B)]).unwrap(), 1.0);
        assert_eq!(pairwise_accuracy(&[p(0.3, 0.3, Choice::A), p(0.3, 0.3, Choice::B)]).unwrap(), 0.5);
        let mixed = [p(1.0, 0.0, Choice::A), p(2.0, 1.0, Choice::A), p(0.0, 1.0, Choice::B), p(0.0, 1.0, Choice::A)];
        assert_eq!(pairwise_accuracy(&mixed).unwrap(), 0.75);
    }

    #[test]
    fn overall_examples() {
        assert!((overall_from_dims([0.6, 0.6, 0.6]) - 0.6).abs() < 1e-15);
        assert_eq!(overall_from_dims([0.0, 0.5, 1.0]), 0.5);
        assert_eq!(overall_from_dims([1.0, 1.0, 1.0]), 1.0);
    }

    #[test]
    fn rouge_examples() {
        let r = tokenize("The cat sat");
        assert_eq!(rouge1(&r, &r).unwrap(), 1.0);
        assert_eq!(rouge1(&["x"], &["y"]).unwrap(), 0.0);
        assert_eq!(rouge1(&["a", "b"], &["a", "c"]).unwrap(), 0.5);
        assert_eq!(rouge1::<&str>(&["a"], &[]), Err(MetricError::EmptyReference));
        assert_eq!(rouge1(&tokenize("A a"), &tokenize("a b")).unwrap(), 0.5);
    }

    proptest! {
        #[test]
        fn srcc_rank_invariance(x in proptest::collection::vec(-10.0f64..10.0, 3..40), seed in 0u64..1000) {
            let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 0.5 + ((i as u64 * 31 + seed) % 7) as f64).collect();
            prop_assume!(!is_constant(&x) && !is_constant(&y));
            let base = srcc(&x, &y).unwrap();
            let warped: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
            prop_assert!((srcc(&warped, &y).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn plcc_affine_behaviour(x in proptest::collection::vec(-5.0f64..5.0, 3..30), a in 0.1f64..10.0, b in -3.0f64..3.0) {
            let y: Vec<f64> = x.iter().map(|v| v.sin()).collect();
            prop_assume!(!is_constant(&x) && !is_constant(&y));
            let base = plcc(&x, &y).unwrap();
            let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            prop_assert!((plcc(&scaled, &y).unwrap() - base).abs() < 1e-9);
            let flipped: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
            prop_assert!((plcc(&flipped, &y).unwrap() + base).abs() < 1e-9);
        }

        #[test]
        fn pairwise_accuracy_swap_symmetry(raw in proptest::collection::vec((0u8..5, 0u8..5, any::<bool>()), 1..30)) {
            let prefs: Vec<Preference> = raw.iter().map(|&(a, b, c)| Preference {
                pred_a: a as f64, pred_b: b as f64, human_choice: if c { Choice::A } else { Choice::B },
            }).collect();
            let swapped: Vec<Preference> = prefs.iter().map(|p| Preference {
                pred_a: p.pred_b, pred_b: p.pred_a,
                human_choice: if p.human_choice == Choice::A { Choice::B } else { Choice::A },
            }).collect();
            let acc = pairwise_accuracy(&prefs).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert_eq!(acc, pairwise_accuracy(&swapped).unwrap());
        }
    }
}
