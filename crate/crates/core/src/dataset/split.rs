//! Source-level train/val/test assignment.
//!
//! Each `source_id` is hashed with the seed ([`crate::util::stable_hash`]),
//! mapped to `[0, 1)` and bucketed by the cumulative ratios, so every pair and
//! critique derived from one source image lands in the same split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CritiqueRecord, DatasetError, EditTriplet, MosRecord};
use crate::util::{stable_hash, unit_interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(DatasetError::InvalidRatios(format!("{parts:?} has a negative entry")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::InvalidRatios(format!("{parts:?} sums to {sum}")));
        }
        Ok(())
    }

    fn bucket(&self, u: f64) -> Split {
        if u < self.train {
            Split::Train
        } else if u < self.train + self.val {
            Split::Val
        } else if self.test > 0.0 {
            Split::Test
        } else if self.val > 0.0 {
            // ratios summing to 1 - ulp leave a sliver above the last bucket
            Split::Val
        } else {
            Split::Train
        }
    }
}

/// Split membership for every source in a manifest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitAssignment {
    pub by_source: BTreeMap<String, Split>,
    pair_to_source: BTreeMap<String, String>,
}

impl SplitAssignment {
    pub fn split_of_source(&self, source_id: &str) -> Option<Split> {
        self.by_source.get(source_id).copied()
    }

    pub fn split_of_pair(&self, pair_id: &str) -> Option<Split> {
        self.pair_to_source.get(pair_id).and_then(|s| self.split_of_source(s))
    }

    pub fn triplets<'a>(&self, triplets: &'a [EditTriplet], split: Split) -> Vec<&'a EditTriplet> {
        triplets.iter().filter(|t| self.split_of_source(&t.source_id) == Some(split)).collect()
    }

    pub fn critiques<'a>(&self, critiques: &'a [CritiqueRecord], split: Split) -> Vec<&'a CritiqueRecord> {
        critiques.iter().filter(|c| self.split_of_pair(&c.pair_id) == Some(split)).collect()
    }

    pub fn mos<'a>(&self, mos: &'a [MosRecord], split: Split) -> Vec<&'a MosRecord> {
        mos.iter().filter(|m| self.split_of_pair(&m.pair_id) == Some(split)).collect()
    }
}

pub fn split_dataset(
    triplets: &[EditTriplet],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment, DatasetError> {
    if triplets.is_empty() {
        return Err(DatasetError::EmptyManifest);
    }
    ratios.validate()?;
    let mut out = SplitAssignment::default();
    for t in triplets {
        out.by_source
            .entry(t.source_id.clone())
            .or_insert_with(|| ratios.bucket(unit_interval(stable_hash(seed, &t.source_id))));
        out.pair_to_source.insert(t.pair_id.clone(), t.source_id.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TaskType;
    use proptest::prelude::*;

    fn triplet(source: &str, pair: &str) -> EditTriplet {
        EditTriplet {
            source_id: source.into(),
            pair_id: pair.into(),
            source_image: format!("{source}.png"),
            edited_image: format!("{pair}.png"),
            instruction: "brighten".into(),
            task_type: TaskType::Lighting,
        }
    }

    #[test]
    fn shared_source_shares_split() {
        let ts: Vec<_> = (0..50)
            .flat_map(|s| (0..3).map(move |p| triplet(&format!("s{s}"), &format!("s{s}p{p}"))))
            .collect();
        let a = split_dataset(&ts, SplitRatios::default(), 7).unwrap();
        for s in 0..50 {
            let splits: Vec<_> = (0..3).map(|p| a.split_of_pair(&format!("s{s}p{p}"))).collect();
            assert!(splits.iter().all(|x| *x == splits[0]));
        }
        let counts: Vec<usize> = Split::ALL.iter().map(|&s| a.triplets(&ts, s).len()).collect();
        assert_eq!(counts.iter().sum::<usize>(), 150);
        assert!(counts[0] > counts[1] && counts[0] > counts[2]);
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let ts: Vec<_> = (0..40).map(|i| triplet(&format!("s{i}"), &format!("p{i}"))).collect();
        let r = SplitRatios { train: 1.0, val: 0.0, test: 0.0 };
        let a = split_dataset(&ts, r, 3).unwrap();
        assert_eq!(a.triplets(&ts, Split::Train).len(), 40);
    }

    #[test]
    fn deterministic_and_validated() {
        let ts: Vec<_> = (0..40).map(|i| triplet(&format!("s{i}"), &format!("p{i}"))).collect();
        assert_eq!(
            split_dataset(&ts, SplitRatios::default(), 11).unwrap(),
            split_dataset(&ts, SplitRatios::default(), 11).unwrap()
        );
        assert_eq!(split_dataset(&[], SplitRatios::default(), 1), Err(DatasetError::EmptyManifest));
        let bad = SplitRatios { train: 0.5, val: 0.2, test: 0.2 };
        assert!(matches!(split_dataset(&ts, bad, 1), Err(DatasetError::InvalidRatios(_))));
    }

    proptest! {
        #[test]
        fn every_source_in_exactly_one_split(
            pairs in proptest::collection::vec((0u8..20, 0u8..5), 1..80),
            seed in any::<u64>(),
        ) {
            let ts: Vec<_> = pairs.iter().map(|(s, p)| triplet(&format!("s{s}"), &format!("s{s}p{p}"))).collect();
            let a = split_dataset(&ts, SplitRatios::default(), seed).unwrap();
            for t in &ts {
                let member: Vec<_> = Split::ALL.iter().filter(|&&s| a.triplets(std::slice::from_ref(t), s).len() == 1).collect();
                prop_assert_eq!(member.len(), 1);
                prop_assert_eq!(a.split_of_pair(&t.pair_id), a.split_of_source(&t.source_id));
            }
        }
    }
}
