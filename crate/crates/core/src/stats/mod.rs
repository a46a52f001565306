//! Annotation post-processing: per-annotator ECDF, mid-point smoothing and
//! probit targets, plus inter-rater reliability and bias screening.

mod bias;
mod ecdf;
mod probit;
mod reliability;

pub use bias::{detect_bias, BiasConfig, BiasReport, BiasVerdict};
pub use ecdf::{
    aggregate_probit, compute_reward_targets, ecdf, smoothed_percentile, AnnotatorEcdf, Dimension,
    LikertRecord, RewardTarget, RewardTargetRecord,
};
pub use probit::{normal_cdf, normal_pdf, probit};
pub use reliability::{
    icc, kendalls_w, leave_one_out_agreement, rating_matrix, transformed_rating_matrix,
    LeaveOneOut, RatingMatrix,
};

use thiserror::Error;

use crate::metrics::MetricError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("no records")]
    EmptyInput,
    #[error("score {0} is not an integer in 1..=5")]
    InvalidScore(i64),
    #[error("percentile {0} is not strictly inside (0, 1)")]
    DegeneratePercentile(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("zero between-item variance")]
    DegenerateVariance,
    #[error("duplicate rating for critique {critique_id}, annotator {annotator_id}, {dimension}")]
    DuplicateRating {
        critique_id: String,
        annotator_id: String,
        dimension: &'static str,
    },
    #[error("critique {0} lacks ratings for {1}")]
    IncompleteCritique(String, &'static str),
    #[error(transparent)]
    Metric(#[from] MetricError),
}
