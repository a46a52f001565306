//! Training and evaluation toolkit for interpretable image-edit critics.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`dataset`]: edit triplets, structured critiques, curation filters,
//!   source-level splits and the exposure-capped epoch sampler.
//! - [`stats`]: per-annotator ECDF, mid-point smoothing and probit targets,
//!   plus Kendall's W, ICC(2,k) and annotator-bias screening.
//! - [`metrics`]: SRCC, KRCC (tau-b), PLCC, pairwise accuracy and ROUGE-1.
//! - [`losses`]: Huber, margin-softplus rank, PLCC and cross-entropy losses
//!   with analytic gradients, and their weighted compositions.
//! - [`model`]: a tiny causal transformer with an LM head and a prefill-pooled
//!   regression head, trained by hand-written backprop.
//! - [`grpo`]: group-relative policy optimization over the toy policy.
//! - [`service`]: the batched reward-scoring and annotation HTTP services.
//! - [`cli`]: the `critic-kit` command-line entry point.

pub mod cli;
pub mod dataset;
pub mod grpo;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod service;
pub mod stats;
pub mod util;

/// The three reward-model dimensions, in wire order.
pub const REWARD_DIMENSIONS: [&str; 3] = ["logicality", "accuracy", "usefulness"];
