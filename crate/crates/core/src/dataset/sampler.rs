//! Dynamic stratified sampling with per-epoch exposure caps.
//!
//! Within one epoch at most `max_pairs_per_source` pair groups are drawn from
//! any source image and at most `max_critiques_per_pair` critiques from any
//! pair. Selection is least-exposed-first using counters that persist across
//! epochs; ties are broken by `(stable_hash(seed, id), id)`.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CritiqueRecord, DatasetError, EditTriplet};
use crate::util::{splitmix64, stable_hash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerCaps {
    pub max_pairs_per_source: usize,
    pub max_critiques_per_pair: usize,
}

impl Default for SamplerCaps {
    fn default() -> Self {
        SamplerCaps { max_pairs_per_source: 6, max_critiques_per_pair: 3 }
    }
}

/// Critiques grouped by pair and pairs grouped by source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SamplingManifest {
    sources: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl SamplingManifest {
    pub fn from_entries<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: Into<String>,
    {
        let mut m = SamplingManifest::default();
        for (source, pair, critique) in entries {
            m.sources
                .entry(source.into())
                .or_default()
                .entry(pair.into())
                .or_default()
                .push(critique.into());
        }
        for pairs in m.sources.values_mut() {
            for critiques in pairs.values_mut() {
                critiques.sort();
                critiques.dedup();
            }
        }
        m
    }

    pub fn from_records(triplets: &[EditTriplet], critiques: &[CritiqueRecord]) -> Result<Self, DatasetError> {
        let source_of: HashMap<&str, &str> =
            triplets.iter().map(|t| (t.pair_id.as_str(), t.source_id.as_str())).collect();
        let mut entries = Vec::with_capacity(critiques.len());
        for c in critiques {
            let source = source_of.get(c.pair_id.as_str()).ok_or_else(|| {
                DatasetError::InvalidManifest(format!("critique {} references unknown pair {}", c.critique_id, c.pair_id))
            })?;
            entries.push((source.to_string(), c.pair_id.clone(), c.critique_id.clone()));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn num_critiques(&self) -> usize {
        self.sources.values().flat_map(|p| p.values()).map(Vec::len).sum()
    }

    pub fn critique_ids(&self) -> impl Iterator<Item = &str> {
        self.sources.values().flat_map(|p| p.values()).flatten().map(String::as_str)
    }

    pub fn sources(&self) -> &BTreeMap<String, BTreeMap<String, Vec<String>>> {
        &self.sources
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExposureCounts {
    /// Pair groups drawn from each source in this epoch.
    pub per_source: BTreeMap<String, usize>,
    /// Critiques drawn from each pair in this epoch.
    pub per_pair: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSample {
    pub epoch: u32,
    pub entries: Vec<String>,
    pub exposure_counts: ExposureCounts,
}

/// Stateful sampler carrying cumulative exposure between epochs.
#[derive(Debug, Clone)]
pub struct StratifiedSampler {
    manifest: SamplingManifest,
    caps: SamplerCaps,
    seed: u64,
    critique_exposure: HashMap<String, u32>,
    pair_selections: HashMap<String, u32>,
    next_epoch: u32,
}

impl StratifiedSampler {
    pub fn new(manifest: SamplingManifest, caps: SamplerCaps, seed: u64) -> Self {
        StratifiedSampler {
            manifest,
            caps,
            seed,
            critique_exposure: HashMap::new(),
            pair_selections: HashMap::new(),
            next_epoch: 1,
        }
    }

    pub fn exposure(&self, critique_id: &str) -> u32 {
        self.critique_exposure.get(critique_id).copied().unwrap_or(0)
    }

    pub fn next_epoch(&mut self) -> EpochSample {
        let epoch = self.next_epoch;
        self.next_epoch += 1;
        let seed = self.seed;
        let mut entries = Vec::new();
        let mut counts = ExposureCounts::default();

        for (source, pairs) in &self.manifest.sources {
            let mut ranked: Vec<(u32, u32, u64, &String)> = pairs
                .iter()
                .map(|(pair, critiques)| {
                    let least = critiques.iter().map(|c| self.exposure(c)).min().unwrap_or(0);
                    let picked = self.pair_selections.get(pair).copied().unwrap_or(0);
                    (least, picked, stable_hash(seed, pair), pair)
                })
                .collect();
            ranked.sort();
            ranked.truncate(self.caps.max_pairs_per_source);
            counts.per_source.insert(source.clone(), ranked.len());

            for (_, _, _, pair) in ranked {
                let mut critiques: Vec<(u32, u64, &String)> = pairs[pair]
                    .iter()
                    .map(|c| (self.exposure(c), stable_hash(seed, c), c))
                    .collect();
                critiques.sort();
                critiques.truncate(self.caps.max_critiques_per_pair);
                counts.per_pair.insert(pair.clone(), critiques.len());
                entries.extend(critiques.into_iter().map(|(_, _, c)| c.clone()));
            }
        }

        for pair in counts.per_pair.keys() {
            *self.pair_selections.entry(pair.clone()).or_default() += 1;
        }
        for c in &entries {
            *self.critique_exposure.entry(c.clone()).or_default() += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ u64::from(epoch).rotate_left(32)));
        entries.shuffle(&mut rng);
        EpochSample { epoch, entries, exposure_counts: counts }
    }
}

/// Replays epochs `1..=epoch` from zero exposure and returns the last one.
pub fn build_epoch_sample(manifest: &SamplingManifest, epoch: u32, seed: u64, caps: SamplerCaps) -> EpochSample {
    let mut sampler = StratifiedSampler::new(manifest.clone(), caps, seed);
    let mut last = EpochSample { epoch: 0, entries: Vec::new(), exposure_counts: ExposureCounts::default() };
    for _ in 0..epoch.max(1) {
        last = sampler.next_epoch();
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// `(epoch, cumulative fraction of critiques exposed at least once)`
    pub per_epoch: Vec<(u32, f64)>,
    pub first_full_epoch: Option<u32>,
    pub final_fraction: f64,
}

pub fn coverage_report(samples: &[EpochSample], manifest: &SamplingManifest) -> CoverageReport {
    let total = manifest.num_critiques();
    let known: std::collections::HashSet<&str> = manifest.critique_ids().collect();
    let mut seen = std::collections::HashSet::new();
    let mut per_epoch = Vec::with_capacity(samples.len());
    let mut first_full_epoch = None;
    for s in samples {
        seen.extend(s.entries.iter().map(String::as_str).filter(|c| known.contains(c)));
        let fraction = if total == 0 { 0.0 } else { seen.len() as f64 / total as f64 };
        if first_full_epoch.is_none() && total > 0 && seen.len() == total {
            first_full_epoch = Some(s.epoch);
        }
        per_epoch.push((s.epoch, fraction));
    }
    let final_fraction = per_epoch.last().map_or(0.0, |&(_, f)| f);
    CoverageReport { per_epoch, first_full_epoch, final_fraction }
}
