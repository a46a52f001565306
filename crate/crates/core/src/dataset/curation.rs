//! Curation and resampling rules for generated critiques.
//!
//! Scores are two-decimal quantities, so comparisons absorb float noise of
//! up to [`COMPARE_EPS`]: `0.8 - 0.5` counts as a deviation of exactly 0.3.

use serde::{Deserialize, Serialize};

use super::DatasetError;

const COMPARE_EPS: f64 = 1e-9;

/// Deviation above which a generated score triggers a resample.
pub const RESAMPLE_THRESHOLD: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationThresholds {
    /// Every human score must be strictly above this.
    pub min_human: f64,
    /// Every |generated - MOS| must be at most this.
    pub max_mos_deviation: f64,
}

impl Default for CurationThresholds {
    fn default() -> Self {
        CurationThresholds { min_human: 0.7, max_mos_deviation: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum RejectReason {
    HumanScoreTooLow { dimension: usize, value: f64 },
    MosDeviation { dimension: usize, deviation: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurationDecision {
    pub keep: bool,
    pub reasons: Vec<RejectReason>,
}

fn check_unit(what: &'static str, values: &[f64; 3]) -> Result<(), DatasetError> {
    for &value in values {
        if !(0.0..=1.0).contains(&value) {
            return Err(DatasetError::OutOfRange { what, value });
        }
    }
    Ok(())
}

pub fn curate_cot(
    human: [f64; 3],
    generated: [f64; 3],
    mos: [f64; 3],
    thresholds: CurationThresholds,
) -> Result<CurationDecision, DatasetError> {
    check_unit("human score", &human)?;
    check_unit("generated score", &generated)?;
    check_unit("mos", &mos)?;
    let mut reasons = Vec::new();
    for (dimension, &value) in human.iter().enumerate() {
        if value <= thresholds.min_human + COMPARE_EPS {
            reasons.push(RejectReason::HumanScoreTooLow { dimension, value });
        }
    }
    for dimension in 0..3 {
        let deviation = (generated[dimension] - mos[dimension]).abs();
        if deviation > thresholds.max_mos_deviation + COMPARE_EPS {
            reasons.push(RejectReason::MosDeviation { dimension, deviation });
        }
    }
    Ok(CurationDecision { keep: reasons.is_empty(), reasons })
}

/// Dimensions whose generated score deviates from the MOS by more than
/// `threshold`. An empty result accepts the critique.
pub fn resample_trigger(
    generated: [f64; 3],
    mos: [f64; 3],
    threshold: f64,
) -> Result<Vec<usize>, DatasetError> {
    check_unit("generated score", &generated)?;
    check_unit("mos", &mos)?;
    Ok((0..3)
        .filter(|&d| (generated[d] - mos[d]).abs() > threshold + COMPARE_EPS)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curate(h: [f64; 3], g: [f64; 3], m: [f64; 3]) -> CurationDecision {
        curate_cot(h, g, m, CurationThresholds::default()).unwrap()
    }

    #[test]
    fn keeps_good_critique() {
        assert!(curate([0.8, 0.75, 0.9], [0.6, 0.6, 0.6], [0.5, 0.7, 0.65]).keep);
    }

    #[test]
    fn human_boundary_is_strict() {
        let d = curate([0.70, 0.9, 0.9], [0.5; 3], [0.5; 3]);
        assert!(!d.keep);
        assert_eq!(d.reasons, vec![RejectReason::HumanScoreTooLow { dimension: 0, value: 0.70 }]);
    }

    #[test]
    fn mos_deviation_rejects_dimension_one() {
        let d = curate([0.9; 3], [0.9, 0.3, 0.5], [0.5, 0.7, 0.5]);
        assert!(!d.keep);
        assert_eq!(d.reasons.len(), 2);
        assert!(matches!(d.reasons[1], RejectReason::MosDeviation { dimension: 1, .. }));
        // dimension 0 deviates by 0.4 as well
        assert!(matches!(d.reasons[0], RejectReason::MosDeviation { dimension: 0, .. }));
    }

    #[test]
    fn deviation_of_exactly_point_three_is_kept() {
        assert!(curate([0.9; 3], [0.8, 0.5, 0.5], [0.5, 0.5, 0.5]).keep);
    }

    #[test]
    fn out_of_range_inputs() {
        assert!(curate_cot([1.1, 0.9, 0.9], [0.5; 3], [0.5; 3], CurationThresholds::default()).is_err());
        assert!(resample_trigger([0.5; 3], [-0.1, 0.5, 0.5], RESAMPLE_THRESHOLD).is_err());
    }

    #[test]
    fn resample_examples() {
        assert!(resample_trigger([0.5; 3], [0.5; 3], RESAMPLE_THRESHOLD).unwrap().is_empty());
        assert_eq!(resample_trigger([0.70, 0.5, 0.5], [0.5; 3], RESAMPLE_THRESHOLD).unwrap(), vec![0]);
        assert!(resample_trigger([0.65, 0.5, 0.5], [0.5; 3], RESAMPLE_THRESHOLD).unwrap().is_empty());
    }
}
