//! The toy dual-head sequence model and its supervised trainer.

pub mod checkpoint;
mod config;
mod generate;
pub mod optim;
mod sft;
mod tensor;
mod transformer;
pub mod vocab;

pub use config::{HeadVariant, ToyBackboneConfig};
pub use generate::{generate, sample_nucleus, sequence_logprobs, tempered_log_softmax, Generation, SamplingConfig};
pub use optim::{AdamW, OptimizerConfig};
pub use sft::{
    regression_srcc, run_sft, sft_loss_and_grad, sft_step, ActiveLosses, DataMix, EpochTelemetry, SftConfig, SftPhase,
    SftRun, SftSchedule, SftStepReport,
};
pub use transformer::{pool, DualHeadModel, ForwardCache, ForwardOutput, Layout, PoolStrategy};
pub use vocab::{SftSample, SyntheticTask};

use thiserror::Error;

use crate::losses::LossError;
use crate::metrics::MetricError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("prompt is empty or longer than the sequence")]
    EmptyPrompt,
    #[error("anchor token {0} not found in the generated region")]
    AnchorNotFound(u32),
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("token {token} outside vocabulary of {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("invalid sampling config: {0}")]
    InvalidSampling(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("schedule does not fit the data: {0}")]
    ScheduleDataMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
