//! Inter-rater reliability over an annotators x items rating matrix.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::ecdf::{smoothed_percentile, AnnotatorEcdf, Dimension, LikertRecord};
use super::{probit, StatsError};
use crate::metrics::{self, midranks};

/// Ratings of `annotators.len()` annotators over `items.len()` items.
/// `values[i][j]` is annotator `i`'s rating of item `j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingMatrix {
    pub annotators: Vec<String>,
    pub items: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

/// Builds the matrix for one dimension from the items rated by every
/// non-excluded annotator (complete cases only).
pub fn rating_matrix(
    records: &[LikertRecord],
    dimension: Dimension,
    excluded: &BTreeSet<String>,
) -> RatingMatrix {
    let mut by_annotator: BTreeMap<&str, BTreeMap<&str, u8>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.dimension == dimension && !excluded.contains(&r.annotator_id)) {
        by_annotator.entry(&r.annotator_id).or_default().insert(&r.critique_id, r.score);
    }
    let mut common: Option<BTreeSet<&str>> = None;
    for items in by_annotator.values() {
        let keys: BTreeSet<&str> = items.keys().copied().collect();
        common = Some(match common {
            None => keys,
            Some(c) => c.intersection(&keys).copied().collect(),
        });
    }
    let items: Vec<&str> = common.unwrap_or_default().into_iter().collect();
    RatingMatrix {
        annotators: by_annotator.keys().map(|s| s.to_string()).collect(),
        items: items.iter().map(|s| s.to_string()).collect(),
        values: by_annotator
            .values()
            .map(|m| items.iter().map(|i| f64::from(m[i])).collect())
            .collect(),
    }
}

/// Same as [`rating_matrix`] but each rating is replaced by the annotator's
/// own probit-transformed smoothed percentile.
pub fn transformed_rating_matrix(
    records: &[LikertRecord],
    dimension: Dimension,
    excluded: &BTreeSet<String>,
) -> Result<RatingMatrix, StatsError> {
    let mut raw = rating_matrix(records, dimension, excluded);
    for (name, row) in raw.annotators.iter().zip(raw.values.iter_mut()) {
        let all: Vec<u8> = records
            .iter()
            .filter(|r| r.dimension == dimension && &r.annotator_id == name)
            .map(|r| r.score)
            .collect();
        let e = AnnotatorEcdf::from_scores(name, dimension, &all)?;
        for v in row.iter_mut() {
            *v = probit(smoothed_percentile(&e, *v as u8)?);
        }
    }
    Ok(raw)
}

fn check_shape(values: &[Vec<f64>], min_raters: usize) -> Result<(usize, usize), StatsError> {
    let m = values.len();
    if m < min_raters {
        return Err(StatsError::ShapeMismatch(format!("need at least {min_raters} annotators, got {m}")));
    }
    let n = values[0].len();
    if n < 2 {
        return Err(StatsError::ShapeMismatch(format!("need at least 2 items, got {n}")));
    }
    if values.iter().any(|r| r.len() != n) {
        return Err(StatsError::ShapeMismatch("ragged rating matrix".into()));
    }
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::ShapeMismatch("non-finite rating".into()));
    }
    Ok((m, n))
}

/// Kendall's coefficient of concordance with midranks and tie correction.
pub fn kendalls_w(values: &[Vec<f64>]) -> Result<f64, StatsError> {
    let (m, n) = check_shape(values, 2)?;
    let mut rank_sums = vec![0.0; n];
    let mut tie_term = 0.0;
    for row in values {
        for (s, r) in rank_sums.iter_mut().zip(midranks(row)) {
            *s += r;
        }
        let mut sorted = row.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i + 1;
            while j < n && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            tie_term += t * t * t - t;
            i = j;
        }
    }
    let mean = rank_sums.iter().sum::<f64>() / n as f64;
    let s: f64 = rank_sums.iter().map(|r| (r - mean).powi(2)).sum();
    let (mf, nf) = (m as f64, n as f64);
    let denom = mf * mf * (nf * nf * nf - nf) - mf * tie_term;
    if denom <= 0.0 {
        // every annotator tied every item
        return Err(StatsError::DegenerateVariance);
    }
    Ok((12.0 * s / denom).clamp(0.0, 1.0))
}

/// ICC(2,k): two-way random effects, absolute agreement, average of `k`
/// raters.
pub fn icc(values: &[Vec<f64>]) -> Result<f64, StatsError> {
    let (k, n) = check_shape(values, 2)?;
    let (kf, nf) = (k as f64, n as f64);
    let item_means: Vec<f64> = (0..n).map(|j| values.iter().map(|r| r[j]).sum::<f64>() / kf).collect();
    let rater_means: Vec<f64> = values.iter().map(|r| r.iter().sum::<f64>() / nf).collect();
    let grand = item_means.iter().sum::<f64>() / nf;

    let ss_items = kf * item_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_total: f64 = values.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    if ss_items <= 1e-12 * ss_total || ss_total == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    if values.iter().all(|r| r == &values[0]) {
        return Ok(1.0);
    }
    let ss_raters = nf * rater_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_error = 0.0;
    for (row, rm) in values.iter().zip(&rater_means) {
        for (v, im) in row.iter().zip(&item_means) {
            ss_error += (v - im - rm + grand).powi(2);
        }
    }
    let ms_items = ss_items / (nf - 1.0);
    let ms_raters = ss_raters / (kf - 1.0);
    let ms_error = ss_error / ((nf - 1.0) * (kf - 1.0));
    Ok((ms_items - ms_error) / (ms_items + (ms_raters - ms_error) / nf))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaveOneOut {
    pub annotator_index: usize,
    pub plcc: f64,
    pub srcc: f64,
}

/// Correlation of each annotator with the mean of all the others.
pub fn leave_one_out_agreement(values: &[Vec<f64>]) -> Result<Vec<LeaveOneOut>, StatsError> {
    let (m, n) = check_shape(values, 3)?;
    let totals: Vec<f64> = (0..n).map(|j| values.iter().map(|r| r[j]).sum()).collect();
    values
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let others: Vec<f64> = totals.iter().zip(row).map(|(t, v)| (t - v) / (m - 1) as f64).collect();
            Ok(LeaveOneOut {
                annotator_index: i,
                plcc: metrics::plcc(row, &others)?,
                srcc: metrics::srcc(row, &others)?,
            })
        })
        .collect()
}
