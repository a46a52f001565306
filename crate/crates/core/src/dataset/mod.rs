//! Dataset records, the critique text format, curation rules, source-level
//! splits and the exposure-capped epoch sampler.

mod critique;
mod curation;
mod sampler;
mod split;
mod types;

pub use critique::{emit_critique, parse_critique, CentiScore, CritiqueBody, CritiqueSections, HEADERS};
pub use curation::{
    curate_cot, resample_trigger, CurationDecision, CurationThresholds, RejectReason,
    RESAMPLE_THRESHOLD,
};
pub use sampler::{
    build_epoch_sample, coverage_report, CoverageReport, EpochSample, ExposureCounts,
    SamplerCaps, SamplingManifest, StratifiedSampler,
};
pub use split::{split_dataset, Split, SplitAssignment, SplitRatios};
pub use types::{Critique, CritiqueRecord, EditTriplet, MosRecord, TaskType};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("missing or out-of-order section header {0}")]
    MissingSection(&'static str),
    #[error("malformed score line: {0}")]
    MalformedScores(String),
    #[error("{what} = {value} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
}
