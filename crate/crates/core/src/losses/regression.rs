use super::{LossError, LossReport};

/// Mean Huber loss. Per element: `e^2 / 2` for `|e| <= delta`, otherwise
/// `delta * (|e| - delta / 2)`, with `e = pred - target`.
pub fn huber(pred: &[f64], target: &[f64], delta: f64) -> Result<LossReport, LossError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(LossError::ShapeMismatch(format!(
            "pred has {} elements, target {}",
            pred.len(),
            target.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(LossError::InvalidDelta(delta));
    }
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            value += if e.abs() <= delta { 0.5 * e * e } else { delta * (e.abs() - 0.5 * delta) };
            e.clamp(-delta, delta) / n
        })
        .collect();
    Ok(LossReport::new(value / n, grad))
}
