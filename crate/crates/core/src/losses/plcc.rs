use super::{HistoryQueue, LossError, LossReport};

/// `1 - r` where `r` is the Pearson correlation over the batch followed by
/// the queue snapshot. Gradient flows only into the batch predictions.
///
/// A window with fewer than two points or zero variance on either side
/// yields value 1, zero gradient and `degenerate = true`.
pub fn plcc_loss(preds: &[f64], targets: &[f64], queue: &HistoryQueue) -> Result<LossReport, LossError> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(LossError::ShapeMismatch(format!(
            "preds has {} elements, targets {}",
            preds.len(),
            targets.len()
        )));
    }
    let xs: Vec<f64> = preds.iter().copied().chain(queue.iter().map(|e| e.0)).collect();
    let ys: Vec<f64> = targets.iter().copied().chain(queue.iter().map(|e| e.1)).collect();
    let degenerate = || LossReport { value: 1.0, grad: vec![0.0; preds.len()], degenerate: true };
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) || ys.iter().all(|&y| y == ys[0]) {
        return Ok(degenerate());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(degenerate());
    }
    let norm = (sxx * syy).sqrt();
    let r = sxy / norm;
    let grad = preds
        .iter()
        .zip(targets)
        .map(|(x, y)| -((y - my) / norm - r * (x - mx) / sxx))
        .collect();
    Ok(LossReport::new(1.0 - r, grad))
}
