//! Joint supervised fine-tuning of both heads under a phased schedule.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{AdamW, OptimizerConfig};
use super::vocab::SftSample;
use super::{DualHeadModel, ModelError, PoolStrategy};
use crate::losses::{cross_entropy, huber, joint_sft_loss, LossWeights};
use crate::metrics::srcc;
use crate::util::splitmix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMix {
    /// Critique samples only, each contributing CE and Huber.
    DualTask,
    /// Critique samples plus score-only samples; CE only where a critique exists.
    MixedWithScoreOnly,
}

impl DataMix {
    pub fn name(self) -> &'static str {
        match self {
            DataMix::DualTask => "dual_task",
            DataMix::MixedWithScoreOnly => "mixed_with_score_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveLosses {
    pub ce: bool,
    pub huber: bool,
}

impl Default for ActiveLosses {
    fn default() -> Self {
        ActiveLosses { ce: true, huber: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftPhase {
    /// Inclusive, 1-based.
    pub first_epoch: usize,
    pub last_epoch: usize,
    pub data_mix: DataMix,
    #[serde(default)]
    pub active_losses: ActiveLosses,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftSchedule {
    pub phases: Vec<SftPhase>,
}

impl Default for SftSchedule {
    /// Dual-task warm-up, three mixed epochs, then a dual-task refresh.
    fn default() -> Self {
        let phase = |first_epoch, last_epoch, data_mix| SftPhase {
            first_epoch,
            last_epoch,
            data_mix,
            active_losses: ActiveLosses::default(),
        };
        SftSchedule {
            phases: vec![
                phase(1, 1, DataMix::DualTask),
                phase(2, 4, DataMix::MixedWithScoreOnly),
                phase(5, 6, DataMix::DualTask),
            ],
        }
    }
}

impl SftSchedule {
    pub fn single_dual_task_epoch() -> Self {
        SftSchedule {
            phases: vec![SftPhase { first_epoch: 1, last_epoch: 1, data_mix: DataMix::DualTask, active_losses: ActiveLosses::default() }],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut next = 1;
        for p in &self.phases {
            if p.first_epoch != next || p.last_epoch < p.first_epoch {
                return Err(ModelError::InvalidSchedule(format!(
                    "phase {}..={} does not continue from epoch {next}",
                    p.first_epoch, p.last_epoch
                )));
            }
            next = p.last_epoch + 1;
        }
        if self.phases.is_empty() {
            return Err(ModelError::InvalidSchedule("no phases".into()));
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.phases.last().map_or(0, |p| p.last_epoch)
    }

    pub fn phase_for(&self, epoch: usize) -> Option<&SftPhase> {
        self.phases.iter().find(|p| (p.first_epoch..=p.last_epoch).contains(&epoch))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftConfig {
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub huber_delta: f64,
    pub seed: u64,
    /// Regression-head dropout during training.
    pub dropout: bool,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            optimizer: OptimizerConfig::default(),
            batch_size: 8,
            weights: LossWeights::default(),
            huber_delta: 1.0,
            seed: 0,
            dropout: true,
        }
    }
}

/// Batch-mean loss components of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftStepReport {
    pub loss_total: f64,
    /// Mean over samples that carried a CE term; 0 if none did.
    pub loss_ce: f64,
    pub loss_huber: f64,
    pub ce_samples: usize,
}

/// Loss and parameter gradient of one batch, averaged over samples.
pub fn sft_loss_and_grad<R: Rng>(
    model: &DualHeadModel,
    batch: &[&SftSample],
    active: ActiveLosses,
    config: &SftConfig,
    rng: Option<&mut R>,
) -> Result<(SftStepReport, Vec<f64>), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let v = model.config.vocab_size;
    let mut grad = vec![0.0; model.num_params()];
    let mut rep = SftStepReport { loss_total: 0.0, loss_ce: 0.0, loss_huber: 0.0, ce_samples: 0 };
    let mut rng = rng;
    for sample in batch {
        let mut tokens = sample.prompt.clone();
        let resp = sample.response.as_deref().filter(|r| active.ce && !r.is_empty());
        if let Some(r) = resp {
            tokens.extend_from_slice(r);
        }
        let (out, cache) = model.forward_with(&tokens, sample.prompt.len(), PoolStrategy::Prefill, rng.as_deref_mut())?;

        let ce = match resp {
            Some(r) => {
                let start = sample.prompt.len() - 1;
                let rows = &out.lm_logits[start * v..(start + r.len()) * v];
                Some(cross_entropy(rows, v, r, &vec![true; r.len()])?)
            }
            None => None,
        };
        let hub = if active.huber {
            huber(&out.scores, &sample.targets, config.huber_delta)?
        } else {
            crate::losses::LossReport::new(0.0, vec![0.0; 3])
        };
        let joint = joint_sft_loss(ce.as_ref(), &hub, &config.weights);
        rep.loss_total += joint.value;
        rep.loss_huber += hub.value;
        let n_ce = ce.as_ref().map_or(0, |c| c.grad.len());
        let dlogits = ce.as_ref().map(|c| {
            let start = (sample.prompt.len() - 1) * v;
            let mut full = vec![0.0; tokens.len() * v];
            full[start..start + c.grad.len()].copy_from_slice(&joint.grad[..n_ce]);
            full
        });
        if let Some(c) = &ce {
            rep.loss_ce += c.value;
            rep.ce_samples += 1;
        }
        let ds = &joint.grad[n_ce..];
        let g = model.backward(&cache, dlogits.as_deref(), [ds[0], ds[1], ds[2]]);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    rep.loss_total /= n;
    rep.loss_huber /= n;
    if rep.ce_samples > 0 {
        rep.loss_ce /= rep.ce_samples as f64;
    }
    Ok((rep, grad))
}

/// One optimizer step on `batch`.
pub fn sft_step<R: Rng>(
    model: &mut DualHeadModel,
    optimizer: &mut AdamW,
    batch: &[&SftSample],
    phase: &SftPhase,
    config: &SftConfig,
    rng: &mut R,
) -> Result<SftStepReport, ModelError> {
    let dropout = if config.dropout { Some(rng) } else { None };
    let (rep, grad) = sft_loss_and_grad(model, batch, phase.active_losses, config, dropout)?;
    optimizer.step(&mut model.params, &grad);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTelemetry {
    pub epoch: usize,
    pub phase: String,
    pub loss_total: f64,
    pub loss_ce: f64,
    pub loss_huber: f64,
    pub val_srcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRun {
    pub telemetry: Vec<EpochTelemetry>,
    /// Mean per-dimension SRCC of the regression head on the validation set.
    pub final_val_srcc: Option<f64>,
}

/// Mean SRCC over the three dimensions, dropout off.
pub fn regression_srcc(model: &DualHeadModel, samples: &[SftSample]) -> Result<f64, ModelError> {
    let mut preds: [Vec<f64>; 3] = Default::default();
    let mut targets: [Vec<f64>; 3] = Default::default();
    for s in samples {
        let scores = model.score(&s.prompt)?;
        for d in 0..3 {
            preds[d].push(scores[d]);
            targets[d].push(s.targets[d]);
        }
    }
    let mut total = 0.0;
    for d in 0..3 {
        total += srcc(&preds[d], &targets[d])?;
    }
    Ok(total / 3.0)
}

fn epoch_pool(samples: &[SftSample], mix: DataMix) -> Vec<&SftSample> {
    samples
        .iter()
        .filter(|s| match mix {
            DataMix::DualTask => s.has_cot(),
            DataMix::MixedWithScoreOnly => true,
        })
        .collect()
}

/// Runs every phase of `schedule` in order, validating at each epoch end.
pub fn run_sft(
    model: &mut DualHeadModel,
    samples: &[SftSample],
    schedule: &SftSchedule,
    config: &SftConfig,
    validation: &[SftSample],
) -> Result<SftRun, ModelError> {
    schedule.validate()?;
    if config.batch_size == 0 {
        return Err(ModelError::EmptyBatch);
    }
    let has_cot = samples.iter().any(SftSample::has_cot);
    let has_score_only = samples.iter().any(|s| !s.has_cot());
    for p in &schedule.phases {
        if p.data_mix == DataMix::MixedWithScoreOnly && !has_score_only {
            return Err(ModelError::ScheduleDataMismatch(format!(
                "epochs {}..={} mix in score-only samples but the manifest has none",
                p.first_epoch, p.last_epoch
            )));
        }
        if p.data_mix == DataMix::DualTask && !has_cot {
            return Err(ModelError::ScheduleDataMismatch(format!(
                "epochs {}..={} need critique samples but the manifest has none",
                p.first_epoch, p.last_epoch
            )));
        }
    }
    let total_steps: usize = (1..=schedule.epochs())
        .map(|e| {
            let mix = schedule.phase_for(e).expect("validated").data_mix;
            epoch_pool(samples, mix).len().div_ceil(config.batch_size)
        })
        .sum();
    let mut optimizer = AdamW::new(config.optimizer, model.num_params(), total_steps, model.layout().regression_head_start());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ 0xd5));
    let mut telemetry = Vec::new();

    for epoch in 1..=schedule.epochs() {
        let phase = *schedule.phase_for(epoch).expect("validated");
        let mut pool = epoch_pool(samples, phase.data_mix);
        let mut order_rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ epoch as u64));
        pool.shuffle(&mut order_rng);
        let (mut total, mut ce, mut hub, mut ce_n) = (0.0, 0.0, 0.0, 0usize);
        for batch in pool.chunks(config.batch_size) {
            let rep = sft_step(model, &mut optimizer, batch, &phase, config, &mut dropout_rng)?;
            let n = batch.len() as f64;
            total += rep.loss_total * n;
            hub += rep.loss_huber * n;
            ce += rep.loss_ce * rep.ce_samples as f64;
            ce_n += rep.ce_samples;
        }
        let n = pool.len() as f64;
        let val_srcc = if validation.len() >= 2 { Some(regression_srcc(model, validation)?) } else { None };
        telemetry.push(EpochTelemetry {
            epoch,
            phase: phase.data_mix.name().to_string(),
            loss_total: total / n,
            loss_ce: if ce_n > 0 { ce / ce_n as f64 } else { 0.0 },
            loss_huber: hub / n,
            val_srcc,
        });
    }
    let final_val_srcc = telemetry.last().and_then(|t| t.val_srcc);
    Ok(SftRun { telemetry, final_val_srcc })
}
