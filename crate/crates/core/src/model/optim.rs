//! AdamW with linear warmup and cosine decay.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Fraction of total steps spent in linear warmup.
    pub warmup_ratio: f64,
    /// Floor of the cosine decay, as a fraction of `lr`.
    pub min_lr_ratio: f64,
    /// Learning-rate multiplier for the regression-head parameters.
    pub head_lr_scale: f64,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub max_grad_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_ratio: 0.03,
            min_lr_ratio: 0.0,
            head_lr_scale: 1.0,
            max_grad_norm: 1.0,
        }
    }
}

/// Learning-rate multiplier at `step` (0-based) of `total`.
pub fn lr_factor(step: usize, total: usize, warmup_ratio: f64, min_lr_ratio: f64) -> f64 {
    let total = total.max(1);
    let warmup = (warmup_ratio * total as f64).ceil() as usize;
    if step < warmup {
        return (step + 1) as f64 / warmup as f64;
    }
    let span = (total - warmup).max(1) as f64;
    let progress = ((step - warmup) as f64 / span).min(1.0);
    min_lr_ratio + (1.0 - min_lr_ratio) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: OptimizerConfig,
    pub total_steps: usize,
    /// Parameters at or after this index use `head_lr_scale`.
    pub head_start: usize,
    step: usize,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(config: OptimizerConfig, n_params: usize, total_steps: usize, head_start: usize) -> Self {
        AdamW { config, total_steps, head_start, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr * lr_factor(self.step, self.total_steps, self.config.warmup_ratio, self.config.min_lr_ratio)
    }

    /// One update. Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> f64 {
        assert_eq!(params.len(), grad.len());
        let c = self.config;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let clip = if c.max_grad_norm > 0.0 && norm > c.max_grad_norm { c.max_grad_norm / norm } else { 1.0 };
        let lr = self.current_lr();
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i] * clip;
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let lr_i = if i >= self.head_start { lr * c.head_lr_scale } else { lr };
            let update = (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + c.eps);
            params[i] -= lr_i * (update + c.weight_decay * params[i]);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        assert!((lr_factor(0, 100, 0.03, 0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(lr_factor(2, 100, 0.03, 0.0), 1.0);
        assert_eq!(lr_factor(3, 100, 0.03, 0.0), 1.0);
        assert!(lr_factor(99, 100, 0.03, 0.0) < 0.01);
        assert!((lr_factor(99, 100, 0.03, 0.3) - 0.3).abs() < 0.01);
    }

    #[test]
    fn zero_lr_leaves_params() {
        let cfg = OptimizerConfig { lr: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, 3, 10, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.3, 0.1, -4.0]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_grad_without_decay_is_fixed_point() {
        let cfg = OptimizerConfig { weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, 2, 10, 2);
        let mut p = vec![1.0, 2.0];
        for _ in 0..5 {
            opt.step(&mut p, &[0.0, 0.0]);
        }
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn minimizes_quadratic() {
        let cfg = OptimizerConfig { lr: 0.1, weight_decay: 0.0, warmup_ratio: 0.0, max_grad_norm: 0.0, ..Default::default() };
        let mut opt = AdamW::new(cfg, 1, 500, 1);
        let mut p = vec![3.0];
        for _ in 0..500 {
            let g = vec![2.0 * (p[0] - 1.0)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-2);
    }
}
