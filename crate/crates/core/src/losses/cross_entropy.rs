use super::{LossError, LossReport};

/// Numerically stable log-softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - lse).collect()
}

/// Mean token NLL over masked positions. `logits` is row-major
/// `targets.len() x vocab`.
pub fn cross_entropy(logits: &[f64], vocab: usize, targets: &[u32], mask: &[bool]) -> Result<LossReport, LossError> {
    if vocab == 0 || logits.len() != targets.len() * vocab || mask.len() != targets.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} logits for {} targets, {} mask entries, vocab {vocab}",
            logits.len(),
            targets.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    let scale = 1.0 / count as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut value = 0.0;
    for (t, (&target, &on)) in targets.iter().zip(mask).enumerate() {
        if !on {
            continue;
        }
        let target = target as usize;
        if target >= vocab {
            return Err(LossError::ShapeMismatch(format!("target token {target} >= vocab {vocab}")));
        }
        let row = &logits[t * vocab..(t + 1) * vocab];
        let lp = log_softmax(row);
        value -= lp[target];
        let g = &mut grad[t * vocab..(t + 1) * vocab];
        for (gi, l) in g.iter_mut().zip(&lp) {
            *gi = l.exp() * scale;
        }
        g[target] -= scale;
    }
    Ok(LossReport::new(value * scale, grad))
}
