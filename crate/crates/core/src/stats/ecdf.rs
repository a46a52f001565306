//! Likert ratings to continuous reward targets.
//!
//! For each annotator and dimension the raw percentile is `P(x) = C(x) / N`,
//! smoothed to the bin mid-point `P'(x) = P(x-1) + (P(x) - P(x-1)) / 2` with
//! `P(0) = 0`. The smoothed percentiles of every annotator who rated a
//! critique are averaged and mapped through the probit.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::{probit, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Logicality,
    Accuracy,
    Usefulness,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::Logicality, Dimension::Accuracy, Dimension::Usefulness];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        crate::REWARD_DIMENSIONS[self.index()]
    }
}

/// One `ratings.jsonl` row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertRecord {
    pub critique_id: String,
    pub annotator_id: String,
    pub dimension: Dimension,
    pub score: u8,
}

fn check_score(score: u8) -> Result<(), StatsError> {
    if (1..=5).contains(&score) {
        Ok(())
    } else {
        Err(StatsError::InvalidScore(i64::from(score)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatorEcdf {
    pub annotator_id: String,
    pub dimension: Dimension,
    /// `counts[x - 1] = C(x)`, the number of scores `<= x`.
    pub counts: [u64; 5],
    pub total: u64,
}

impl AnnotatorEcdf {
    pub fn from_scores(annotator_id: &str, dimension: Dimension, scores: &[u8]) -> Result<Self, StatsError> {
        if scores.is_empty() {
            return Err(StatsError::EmptyInput);
        }
        let mut hist = [0u64; 5];
        for &s in scores {
            check_score(s)?;
            hist[usize::from(s - 1)] += 1;
        }
        let mut counts = [0u64; 5];
        let mut running = 0;
        for (c, h) in counts.iter_mut().zip(hist) {
            running += h;
            *c = running;
        }
        Ok(AnnotatorEcdf {
            annotator_id: annotator_id.to_string(),
            dimension,
            counts,
            total: running,
        })
    }

    /// Raw percentile `P(x)` for `x` in `0..=5`.
    pub fn percentile(&self, x: u8) -> f64 {
        match x {
            0 => 0.0,
            1..=5 => self.counts[usize::from(x - 1)] as f64 / self.total as f64,
            _ => 1.0,
        }
    }
}

/// ECDF for a single annotator and dimension.
pub fn ecdf(records: &[LikertRecord]) -> Result<AnnotatorEcdf, StatsError> {
    let first = records.first().ok_or(StatsError::EmptyInput)?;
    if records
        .iter()
        .any(|r| r.annotator_id != first.annotator_id || r.dimension != first.dimension)
    {
        return Err(StatsError::ShapeMismatch(
            "records span more than one annotator or dimension".into(),
        ));
    }
    let scores: Vec<u8> = records.iter().map(|r| r.score).collect();
    AnnotatorEcdf::from_scores(&first.annotator_id, first.dimension, &scores)
}

pub fn smoothed_percentile(ecdf: &AnnotatorEcdf, x: u8) -> Result<f64, StatsError> {
    check_score(x)?;
    let lo = ecdf.percentile(x - 1);
    let hi = ecdf.percentile(x);
    Ok(lo + (hi - lo) / 2.0)
}

/// Probit of the mean smoothed percentile.
pub fn aggregate_probit(percentiles: &[f64]) -> Result<f64, StatsError> {
    if percentiles.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    for &p in percentiles {
        if !(p > 0.0 && p < 1.0) {
            return Err(StatsError::DegeneratePercentile(p));
        }
    }
    let mean = percentiles.iter().sum::<f64>() / percentiles.len() as f64;
    Ok(probit(mean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardTarget {
    pub critique_id: String,
    /// (logicality, accuracy, usefulness) on the probit scale.
    pub targets: [f64; 3],
    pub contributing_annotators: Vec<String>,
}

/// One `reward_targets.jsonl` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTargetRecord {
    pub critique_id: String,
    pub targets: [f64; 3],
    pub n_annotators: usize,
}

impl From<&RewardTarget> for RewardTargetRecord {
    fn from(t: &RewardTarget) -> Self {
        RewardTargetRecord {
            critique_id: t.critique_id.clone(),
            targets: t.targets,
            n_annotators: t.contributing_annotators.len(),
        }
    }
}

/// Runs the full ECDF -> smoothing -> probit pipeline, per dimension, after
/// dropping `excluded` annotators. Output is sorted by critique id.
pub fn compute_reward_targets(
    records: &[LikertRecord],
    excluded: &BTreeSet<String>,
) -> Result<Vec<RewardTarget>, StatsError> {
    let mut seen = HashSet::new();
    for r in records {
        check_score(r.score)?;
        if !seen.insert((&r.critique_id, &r.annotator_id, r.dimension)) {
            return Err(StatsError::DuplicateRating {
                critique_id: r.critique_id.clone(),
                annotator_id: r.annotator_id.clone(),
                dimension: r.dimension.name(),
            });
        }
    }
    let kept: Vec<&LikertRecord> = records.iter().filter(|r| !excluded.contains(&r.annotator_id)).collect();
    if kept.is_empty() {
        return Err(StatsError::EmptyInput);
    }

    let mut scores_by_rater: BTreeMap<(&str, Dimension), Vec<u8>> = BTreeMap::new();
    for r in &kept {
        scores_by_rater.entry((&r.annotator_id, r.dimension)).or_default().push(r.score);
    }
    let ecdfs: BTreeMap<(&str, Dimension), AnnotatorEcdf> = scores_by_rater
        .iter()
        .map(|(&(a, d), s)| AnnotatorEcdf::from_scores(a, d, s).map(|e| ((a, d), e)))
        .collect::<Result<_, _>>()?;

    let mut per_critique: BTreeMap<&str, [Vec<f64>; 3]> = BTreeMap::new();
    let mut raters: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &kept {
        let e = &ecdfs[&(r.annotator_id.as_str(), r.dimension)];
        per_critique.entry(&r.critique_id).or_default()[r.dimension.index()].push(smoothed_percentile(e, r.score)?);
        raters.entry(&r.critique_id).or_default().insert(&r.annotator_id);
    }

    per_critique
        .into_iter()
        .map(|(cid, dims)| {
            let mut targets = [0.0; 3];
            for d in Dimension::ALL {
                let p = &dims[d.index()];
                if p.is_empty() {
                    return Err(StatsError::IncompleteCritique(cid.to_string(), d.name()));
                }
                targets[d.index()] = aggregate_probit(p)?;
            }
            Ok(RewardTarget {
                critique_id: cid.to_string(),
                targets,
                contributing_annotators: raters[cid].iter().map(|s| s.to_string()).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn worked() -> AnnotatorEcdf {
        AnnotatorEcdf::from_scores("a", Dimension::Accuracy, &[1, 2, 2, 5]).unwrap()
    }

    #[test]
    fn ecdf_worked_example() {
        let e = worked();
        let p: Vec<f64> = (1..=5).map(|x| e.percentile(x)).collect();
        assert_eq!(p, vec![0.25, 0.75, 0.75, 0.75, 1.0]);
        let single = AnnotatorEcdf::from_scores("a", Dimension::Accuracy, &[3]).unwrap();
        assert_eq!((1..=5).map(|x| single.percentile(x)).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        let top = AnnotatorEcdf::from_scores("a", Dimension::Accuracy, &[5, 5]).unwrap();
        assert_eq!((1..=5).map(|x| top.percentile(x)).collect::<Vec<_>>(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn smoothing_worked_example() {
        let e = worked();
        assert_eq!(smoothed_percentile(&e, 1).unwrap(), 0.125);
        assert_eq!(smoothed_percentile(&e, 2).unwrap(), 0.5);
        assert_eq!(smoothed_percentile(&e, 5).unwrap(), 0.875);
        assert_eq!(smoothed_percentile(&e, 0), Err(StatsError::InvalidScore(0)));
        assert_eq!(smoothed_percentile(&e, 6), Err(StatsError::InvalidScore(6)));
    }

    #[test]
    fn ecdf_errors() {
        assert_eq!(ecdf(&[]), Err(StatsError::EmptyInput));
        let r = |a: &str, s| LikertRecord { critique_id: "c".into(), annotator_id: a.into(), dimension: Dimension::Logicality, score: s };
        assert!(matches!(ecdf(&[r("a", 1), r("b", 2)]), Err(StatsError::ShapeMismatch(_))));
        assert_eq!(ecdf(&[r("a", 7)]), Err(StatsError::InvalidScore(7)));
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_probit(&[0.5, 0.5]).unwrap(), 0.0);
        assert!((aggregate_probit(&[0.841_344_746]).unwrap() - 1.0).abs() < 1e-8);
        // frozen from bisection on the Gaussian CDF
        assert!((aggregate_probit(&[0.125]).unwrap() + 1.150_349_380_376_008).abs() < 1e-9);
        assert_eq!(aggregate_probit(&[0.0]), Err(StatsError::DegeneratePercentile(0.0)));
        assert_eq!(aggregate_probit(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn pipeline_targets() {
        let mut recs = Vec::new();
        for (c, s) in [("c1", 1u8), ("c2", 2), ("c3", 2), ("c4", 5)] {
            for d in Dimension::ALL {
                recs.push(LikertRecord { critique_id: c.into(), annotator_id: "a".into(), dimension: d, score: s });
            }
        }
        let t = compute_reward_targets(&recs, &BTreeSet::new()).unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(t[1].targets, [0.0; 3]);
        assert!((t[3].targets[0] - 1.150_349_380_376_008).abs() < 1e-9);
        assert_eq!(t[0].contributing_annotators, vec!["a".to_string()]);

        let mut dup = recs.clone();
        dup.push(recs[0].clone());
        assert!(matches!(compute_reward_targets(&dup, &BTreeSet::new()), Err(StatsError::DuplicateRating { .. })));

        let partial: Vec<_> = recs.iter().filter(|r| !(r.critique_id == "c2" && r.dimension == Dimension::Usefulness)).cloned().collect();
        assert!(matches!(compute_reward_targets(&partial, &BTreeSet::new()), Err(StatsError::IncompleteCritique(_, "usefulness"))));

        let excluded: BTreeSet<String> = ["a".to_string()].into();
        assert_eq!(compute_reward_targets(&recs, &excluded), Err(StatsError::EmptyInput));
    }

    proptest! {
        #[test]
        fn smoothed_is_monotone_and_interior(scores in proptest::collection::vec(1u8..=5, 1..60)) {
            let e = AnnotatorEcdf::from_scores("a", Dimension::Usefulness, &scores).unwrap();
            let mut prev = 0.0;
            let mut prev_probit = f64::NEG_INFINITY;
            for x in 1..=5u8 {
                let p = smoothed_percentile(&e, x).unwrap();
                prop_assert!(p >= prev);
                if scores.contains(&x) {
                    prop_assert!(p > 0.0 && p < 1.0);
                    prop_assert!(p > prev);
                    let z = aggregate_probit(&[p]).unwrap();
                    prop_assert!(z.is_finite() && z >= prev_probit);
                    prev_probit = z;
                }
                prev = p;
            }
        }
    }
}
