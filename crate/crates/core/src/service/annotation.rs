//! Annotation task queue backed by an append-only rating log.
//!
//! All state is derived from `ratings_log.jsonl`: opening a store replays the
//! log, so a restarted server answers `/tasks/next` and `/progress` exactly as
//! before. Every annotator sees the whole pool in a seeded per-annotator
//! order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::stats::{Dimension, LikertRecord};
use crate::util::{splitmix64, stable_hash};

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("invalid score for {dimension}: {value} (expected an integer in 1..=5)")]
    InvalidScore { dimension: &'static str, value: String },
    #[error("annotator {annotator} already rated task {task_id}")]
    DuplicateSubmission { task_id: String, annotator: String },
    #[error("duplicate task id {0} in task pool")]
    DuplicateTask(String),
    #[error("corrupt rating log at line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("rating log io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One pool entry. The task id is the critique id, so rating-log rows map
/// straight onto annotation records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub critique_id: String,
    pub source_image: String,
    pub edited_image: String,
    pub instruction: String,
    pub critique_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub source_image: String,
    pub edited_image: String,
    pub instruction: String,
    pub critique_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Pending,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub task_id: String,
    pub critique_id: String,
    pub payload: TaskPayload,
    pub assigned_annotator: String,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertScores {
    pub logicality: u8,
    pub accuracy: u8,
    pub usefulness: u8,
}

impl LikertScores {
    pub fn get(&self, d: Dimension) -> u8 {
        match d {
            Dimension::Logicality => self.logicality,
            Dimension::Accuracy => self.accuracy,
            Dimension::Usefulness => self.usefulness,
        }
    }

    /// Strict parse of a `{logicality, accuracy, usefulness}` object: each
    /// value must be an integer in 1..=5 (`4.0` and `"4"` are rejected).
    pub fn from_value(v: &Value) -> Result<Self, AnnotationError> {
        let mut out = [0u8; 3];
        for d in Dimension::ALL {
            let raw = v.get(d.name());
            let parsed = raw.and_then(Value::as_u64).filter(|s| (1..=5).contains(s));
            match parsed {
                Some(s) => out[d.index()] = s as u8,
                None => {
                    return Err(AnnotationError::InvalidScore {
                        dimension: d.name(),
                        value: raw.map_or_else(|| "missing".to_string(), Value::to_string),
                    })
                }
            }
        }
        Ok(LikertScores { logicality: out[0], accuracy: out[1], usefulness: out[2] })
    }
}

/// One `ratings_log.jsonl` row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingEvent {
    /// Milliseconds since the Unix epoch at append time.
    pub ts: u64,
    pub task_id: String,
    pub annotator: String,
    pub scores: LikertScores,
}

impl RatingEvent {
    pub fn likert_records(&self) -> [LikertRecord; 3] {
        Dimension::ALL.map(|d| LikertRecord {
            critique_id: self.task_id.clone(),
            annotator_id: self.annotator.clone(),
            dimension: d,
            score: self.scores.get(d),
        })
    }
}

/// Reads a rating log into annotation records, three per event.
pub fn read_rating_log(path: impl AsRef<Path>) -> Result<Vec<LikertRecord>, AnnotationError> {
    Ok(read_events(path.as_ref())?.iter().flat_map(RatingEvent::likert_records).collect())
}

fn read_events(path: &Path) -> Result<Vec<RatingEvent>, AnnotationError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev: RatingEvent =
            serde_json::from_str(&line).map_err(|e| AnnotationError::CorruptLog { line: i + 1, message: e.to_string() })?;
        out.push(ev);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub annotator: String,
    pub done: usize,
    pub total: usize,
    /// Records persisted per dimension.
    pub per_dimension_counts: BTreeMap<String, usize>,
}

#[derive(Debug)]
pub struct AnnotationStore {
    tasks: Vec<TaskSpec>,
    index: HashMap<String, usize>,
    /// Empty means any annotator id is accepted.
    annotators: BTreeSet<String>,
    seed_salt: u64,
    done: HashMap<String, BTreeSet<usize>>,
    orders: HashMap<String, Vec<usize>>,
    log_path: Option<PathBuf>,
    events: Vec<RatingEvent>,
}

impl AnnotationStore {
    /// Opens a store, replaying `log_path` if it exists. `None` keeps the
    /// log in memory only.
    pub fn open(
        tasks: Vec<TaskSpec>,
        annotators: BTreeSet<String>,
        seed_salt: u64,
        log_path: Option<PathBuf>,
    ) -> Result<Self, AnnotationError> {
        let mut index = HashMap::with_capacity(tasks.len());
        for (i, t) in tasks.iter().enumerate() {
            if index.insert(t.critique_id.clone(), i).is_some() {
                return Err(AnnotationError::DuplicateTask(t.critique_id.clone()));
            }
        }
        let mut store = AnnotationStore {
            tasks,
            index,
            annotators,
            seed_salt,
            done: HashMap::new(),
            orders: HashMap::new(),
            log_path,
            events: Vec::new(),
        };
        let replay = match &store.log_path {
            Some(p) => read_events(p)?,
            None => Vec::new(),
        };
        for (i, ev) in replay.into_iter().enumerate() {
            store.apply(&ev).map_err(|e| AnnotationError::CorruptLog { line: i + 1, message: e.to_string() })?;
            store.events.push(ev);
        }
        Ok(store)
    }

    pub fn total(&self) -> usize {
        self.tasks.len()
    }

    pub fn events(&self) -> &[RatingEvent] {
        &self.events
    }

    fn check_annotator(&self, annotator: &str) -> Result<(), AnnotationError> {
        if annotator.is_empty() || (!self.annotators.is_empty() && !self.annotators.contains(annotator)) {
            return Err(AnnotationError::UnknownAnnotator(annotator.to_string()));
        }
        Ok(())
    }

    fn apply(&mut self, ev: &RatingEvent) -> Result<(), AnnotationError> {
        self.check_annotator(&ev.annotator)?;
        let &t = self.index.get(&ev.task_id).ok_or_else(|| AnnotationError::UnknownTask(ev.task_id.clone()))?;
        if !self.done.entry(ev.annotator.clone()).or_default().insert(t) {
            return Err(AnnotationError::DuplicateSubmission { task_id: ev.task_id.clone(), annotator: ev.annotator.clone() });
        }
        Ok(())
    }

    /// The annotator's task order: a permutation seeded by the salt and the
    /// annotator id.
    pub fn order(&mut self, annotator: &str) -> &[usize] {
        let n = self.tasks.len();
        let salt = self.seed_salt;
        self.orders.entry(annotator.to_string()).or_insert_with(|| {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(stable_hash(salt, annotator)));
            order.shuffle(&mut rng);
            order
        })
    }

    /// First pending task in the annotator's order. Repeated calls return the
    /// same task until it is rated.
    pub fn next_task(&mut self, annotator: &str) -> Result<Option<AnnotationTask>, AnnotationError> {
        self.check_annotator(annotator)?;
        let done = self.done.get(annotator).cloned().unwrap_or_default();
        let next = self.order(annotator).iter().copied().find(|i| !done.contains(i));
        Ok(next.map(|i| {
            let t = &self.tasks[i];
            AnnotationTask {
                task_id: t.critique_id.clone(),
                critique_id: t.critique_id.clone(),
                payload: TaskPayload {
                    source_image: t.source_image.clone(),
                    edited_image: t.edited_image.clone(),
                    instruction: t.instruction.clone(),
                    critique_text: t.critique_text.clone(),
                },
                assigned_annotator: annotator.to_string(),
                status: TaskStatus::Pending,
            }
        }))
    }

    /// Validates, appends and syncs one rating before updating the index.
    /// Nothing is written when validation fails.
    pub fn submit(&mut self, task_id: &str, annotator: &str, scores: LikertScores, ts: u64) -> Result<RatingEvent, AnnotationError> {
        self.check_annotator(annotator)?;
        let &t = self.index.get(task_id).ok_or_else(|| AnnotationError::UnknownTask(task_id.to_string()))?;
        if self.done.get(annotator).is_some_and(|d| d.contains(&t)) {
            return Err(AnnotationError::DuplicateSubmission { task_id: task_id.to_string(), annotator: annotator.to_string() });
        }
        for d in Dimension::ALL {
            let s = scores.get(d);
            if !(1..=5).contains(&s) {
                return Err(AnnotationError::InvalidScore { dimension: d.name(), value: s.to_string() });
            }
        }
        let ev = RatingEvent { ts, task_id: task_id.to_string(), annotator: annotator.to_string(), scores };
        if let Some(path) = &self.log_path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut line = serde_json::to_string(&ev).expect("serializable event");
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        self.apply(&ev)?;
        self.events.push(ev.clone());
        Ok(ev)
    }

    pub fn progress(&self, annotator: &str) -> Result<Progress, AnnotationError> {
        self.check_annotator(annotator)?;
        let mut per_dimension_counts: BTreeMap<String, usize> = Dimension::ALL.iter().map(|d| (d.name().to_string(), 0)).collect();
        for ev in self.events.iter().filter(|e| e.annotator == annotator) {
            for r in ev.likert_records() {
                *per_dimension_counts.get_mut(r.dimension.name()).expect("all dimensions seeded") += 1;
            }
        }
        Ok(Progress {
            annotator: annotator.to_string(),
            done: self.done.get(annotator).map_or(0, BTreeSet::len),
            total: self.tasks.len(),
            per_dimension_counts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    pub(crate) fn pool(n: usize) -> Vec<TaskSpec> {
        (0..n)
            .map(|i| TaskSpec {
                critique_id: format!("c{i:03}"),
                source_image: format!("src/{i}.png"),
                edited_image: format!("edit/{i}.png"),
                instruction: "brighten the sky".into(),
                critique_text: format!("critique {i}"),
            })
            .collect()
    }

    const FIVES: LikertScores = LikertScores { logicality: 5, accuracy: 5, usefulness: 5 };

    #[test]
    fn next_is_idempotent_until_rated() {
        let mut s = AnnotationStore::open(pool(5), BTreeSet::new(), 7, None).unwrap();
        let a = s.next_task("ann").unwrap().unwrap();
        assert_eq!(s.next_task("ann").unwrap().unwrap(), a);
        s.submit(&a.task_id, "ann", FIVES, 0).unwrap();
        assert_ne!(s.next_task("ann").unwrap().unwrap().task_id, a.task_id);
    }

    #[test]
    fn exhaustion_and_duplicates() {
        let mut s = AnnotationStore::open(pool(2), BTreeSet::new(), 0, None).unwrap();
        while let Some(t) = s.next_task("a").unwrap() {
            s.submit(&t.task_id, "a", FIVES, 0).unwrap();
        }
        assert!(matches!(s.submit("c000", "a", FIVES, 0), Err(AnnotationError::DuplicateSubmission { .. })));
        assert!(matches!(s.submit("nope", "a", FIVES, 0), Err(AnnotationError::UnknownTask(_))));
        assert_eq!(s.progress("a").unwrap().done, 2);
        assert_eq!(s.events().len(), 2);
    }

    #[test]
    fn registered_annotators_only() {
        let reg: BTreeSet<String> = ["alice".to_string()].into();
        let mut s = AnnotationStore::open(pool(2), reg, 0, None).unwrap();
        assert!(s.next_task("alice").is_ok());
        assert!(matches!(s.next_task("bob"), Err(AnnotationError::UnknownAnnotator(_))));
        assert!(matches!(s.progress("bob"), Err(AnnotationError::UnknownAnnotator(_))));
    }

    #[test]
    fn orders_differ_between_annotators() {
        let mut s = AnnotationStore::open(pool(100), BTreeSet::new(), 11, None).unwrap();
        let a = s.order("alice").to_vec();
        let b = s.order("bob").to_vec();
        assert_ne!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn strict_score_parsing() {
        let ok = LikertScores::from_value(&json!({"logicality": 1, "accuracy": 5, "usefulness": 3})).unwrap();
        assert_eq!(ok.accuracy, 5);
        for bad in [
            json!({"logicality": 6, "accuracy": 5, "usefulness": 3}),
            json!({"logicality": 0, "accuracy": 5, "usefulness": 3}),
            json!({"logicality": 2.5, "accuracy": 5, "usefulness": 3}),
            json!({"logicality": "2", "accuracy": 5, "usefulness": 3}),
            json!({"accuracy": 5, "usefulness": 3}),
        ] {
            assert!(matches!(LikertScores::from_value(&bad), Err(AnnotationError::InvalidScore { .. })));
        }
    }

    #[test]
    fn replay_reconstructs_progress() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("ratings_log.jsonl");
        let mut s = AnnotationStore::open(pool(10), BTreeSet::new(), 3, Some(log.clone())).unwrap();
        for who in ["a", "b"] {
            for _ in 0..3 {
                let t = s.next_task(who).unwrap().unwrap();
                s.submit(&t.task_id, who, LikertScores { logicality: 2, accuracy: 3, usefulness: 4 }, 1).unwrap();
            }
        }
        let mut r = AnnotationStore::open(pool(10), BTreeSet::new(), 3, Some(log.clone())).unwrap();
        for who in ["a", "b", "c"] {
            assert_eq!(r.progress(who).unwrap(), s.progress(who).unwrap());
            assert_eq!(r.next_task(who).unwrap(), s.next_task(who).unwrap());
        }
        let recs = read_rating_log(&log).unwrap();
        assert_eq!(recs.len(), 18);
        assert!(recs.iter().any(|r| r.dimension == Dimension::Usefulness && r.score == 4));
    }
}
