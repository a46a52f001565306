//! The `critic-kit` command line.
//!
//! Every subcommand reads JSONL inputs, writes JSON or JSONL outputs with
//! floats rounded to six decimals, and drops a `run_config.json` snapshot
//! beside its outputs. `--config FILE` takes a JSON document whose sections
//! (`thresholds`, `ratios`, `caps`, `bias`, `model`, `sft`, `synthetic`,
//! `grpo`, `serve`, ...) are merged over the built-in defaults.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error. Errors are printed
//! to stderr as a single JSON object.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{
    build_epoch_sample, coverage_report, curate_cot, parse_critique, resample_trigger, split_dataset, CritiqueRecord,
    CurationThresholds, EditTriplet, MosRecord, SamplerCaps, SamplingManifest, Split, SplitRatios, RESAMPLE_THRESHOLD,
};
use crate::grpo::{train_grpo, GrpoConfig, HttpRewardClient, InProcessRewardClient, PromptRecord, RewardClient};
use crate::metrics::{krcc_tau_b, overall_from_dims, pairwise_accuracy, plcc, rouge1, srcc, tokenize, Choice, Preference};
use crate::model::checkpoint;
use crate::model::{run_sft, DualHeadModel, HeadVariant, SftConfig, SftSample, SftSchedule, SyntheticTask, ToyBackboneConfig};
use crate::service::backend::post_score_batch;
use crate::service::schema::{ItemError, ItemResult, ScoreItem, ScoredItem};
use crate::service::{
    serve, ConstantScorer, HashScorer, ModelScorer, ProxyScorer, RatingEvent, Scorer, ScoringLimits, ServeConfig,
    TargetWordScorer,
};
use crate::stats::{
    compute_reward_targets, detect_bias, icc, kendalls_w, leave_one_out_agreement, rating_matrix,
    transformed_rating_matrix, BiasConfig, BiasVerdict, Dimension, LikertRecord, RewardTargetRecord,
};
use crate::util::{read_jsonl, round_json, splitmix64};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Bad flag values that clap cannot catch; exits with code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "critic-kit", version, about = "Train and evaluate interpretable image-edit critics")]
pub struct Cli {
    /// JSON document of config overrides, keyed by section.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter critiques by human quality and MOS agreement; flag resamples.
    Curate(CurateArgs),
    /// Assign sources to train/val/test and write per-split manifests.
    Split(SplitArgs),
    /// Emit one epoch of the exposure-capped stratified sampler.
    Sample(SampleArgs),
    /// Report cumulative critique coverage of the sampler over epochs.
    Coverage(CoverageArgs),
    /// Turn Likert ratings into probit reward targets.
    Aggregate(AggregateArgs),
    /// Inter-rater agreement and annotator-bias screening.
    Reliability(ReliabilityArgs),
    /// Compute one metric (or all correlations) between predictions and targets.
    EvalMetrics(EvalMetricsArgs),
    /// Supervised fine-tuning of the toy dual-head model.
    TrainSft(TrainSftArgs),
    /// GRPO on a toy policy checkpoint.
    TrainGrpo(TrainGrpoArgs),
    /// Run the scoring and annotation HTTP service.
    Serve(ServeArgs),
    /// Score a JSONL file of items in process or against a running service.
    Score(ScoreArgs),
    /// Correlation report (overall and per dimension).
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct CurateArgs {
    #[arg(long)]
    pub critiques: PathBuf,
    #[arg(long)]
    pub mos: PathBuf,
    /// JSONL rows `{"critique_id", "human": [l, a, u]}` in [0, 1].
    #[arg(long)]
    pub human: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long)]
    pub critiques: Option<PathBuf>,
    #[arg(long)]
    pub mos: Option<PathBuf>,
    /// `train,val,test`, e.g. `0.8,0.1,0.1`.
    #[arg(long)]
    pub ratios: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long)]
    pub critiques: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub epoch: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CoverageArgs {
    #[arg(long)]
    pub triplets: PathBuf,
    #[arg(long)]
    pub critiques: PathBuf,
    /// Upper bound on simulated epochs.
    #[arg(long, default_value_t = 50)]
    pub max_epochs: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct AggregateArgs {
    /// `ratings.jsonl` rows or a service `ratings_log.jsonl`.
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Drop annotators flagged by the bias screen before building ECDFs.
    #[arg(long)]
    pub exclude_flagged: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReliabilityArgs {
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long)]
    pub exclude_flagged: bool,
    /// Print a plain-text table instead of JSON.
    #[arg(long)]
    pub table: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Srcc,
    Krcc,
    Plcc,
    Pairacc,
    Rouge1,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalMetricsArgs {
    /// JSONL rows `{"id", "score"}`, `{"id", "scores": [3]}` or `{"id", "text"}`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Same row shapes, or `{"a", "b", "choice": "A"|"B"}` for `pairacc`.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum)]
    pub metric: Option<MetricName>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub table: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainSftArgs {
    /// JSONL of `{"prompt", "response", "targets"}` samples, or `synthetic`.
    #[arg(long)]
    pub manifest: String,
    /// Held-out samples for per-epoch SRCC.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// `default`, `single`, or a JSON schedule file.
    #[arg(long, default_value = "default")]
    pub schedule: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainGrpoArgs {
    #[arg(long)]
    pub policy: PathBuf,
    /// Base URL of a scoring service, or `toy` for the target-word reward.
    #[arg(long)]
    pub reward_url: String,
    /// JSONL of prompt records, or `synthetic`.
    #[arg(long)]
    pub prompts: String,
    /// JSONL of samples whose regression SRCC is tracked.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// `hash`, `constant:L,A,U`, `model:CKPT` or `proxy:URL`.
    #[arg(long, default_value = "hash")]
    pub backend: String,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// JSONL annotation task pool.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Comma-separated registered annotators; empty accepts any id.
    #[arg(long)]
    pub annotators: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed_salt: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// JSONL of request items.
    #[arg(long)]
    pub items: PathBuf,
    /// Score against a running service instead of in process.
    #[arg(long, conflicts_with = "backend")]
    pub url: Option<String>,
    #[arg(long, default_value = "hash")]
    pub backend: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let (code, kind) = if e.is::<UsageError>() { (2, "usage") } else { (1, "domain") };
            let msg = format!("{e:#}");
            eprintln!("{}", json!({ "error": kind, "message": msg }));
            code
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let overrides = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("--config {}: {e}", p.display())))?;
            if !v.is_object() {
                return Err(usage("--config must hold a JSON object"));
            }
            v
        }
        None => json!({}),
    };
    let cfg = Overrides(overrides);
    match cli.command {
        Command::Curate(a) => curate(a, &cfg),
        Command::Split(a) => split(a, &cfg),
        Command::Sample(a) => sample(a, &cfg),
        Command::Coverage(a) => coverage(a, &cfg),
        Command::Aggregate(a) => aggregate(a, &cfg),
        Command::Reliability(a) => reliability(a, &cfg),
        Command::EvalMetrics(a) => eval_metrics(a),
        Command::TrainSft(a) => train_sft(a, &cfg),
        Command::TrainGrpo(a) => train_grpo_cmd(a, &cfg),
        Command::Serve(a) => serve_cmd(a, &cfg),
        Command::Score(a) => score(a),
        Command::Report(a) => report(a),
    }
}

struct Overrides(Value);

impl Overrides {
    /// `default` with the named section merged over it.
    fn section<T: Serialize + DeserializeOwned>(&self, name: &str, default: T) -> anyhow::Result<T> {
        let Some(patch) = self.0.get(name) else {
            return Ok(default);
        };
        let mut base = serde_json::to_value(&default)?;
        merge(&mut base, patch);
        serde_json::from_value(base).map_err(|e| usage(format!("config section {name:?}: {e}")))
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

fn rounded<T: Serialize>(v: &T) -> anyhow::Result<Value> {
    let mut v = serde_json::to_value(v)?;
    round_json(&mut v);
    Ok(v)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Pretty JSON, rounded, to `out` or stdout.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(&rounded(value)?)?;
    text.push('\n');
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(&rounded(r)?)?);
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

/// Writes `run_config.json` into `dir`.
fn snapshot<A: Serialize, C: Serialize>(dir: &Path, subcommand: &str, args: &A, config: &C) -> anyhow::Result<()> {
    let doc = json!({
        "subcommand": subcommand,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
        "config": config,
    });
    emit(&doc, Some(&dir.join(RUN_CONFIG_FILE)))
}

fn dir_of(file: &Path) -> PathBuf {
    match file.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    Ok(read_jsonl(path)?)
}

fn curate(a: CurateArgs, cfg: &Overrides) -> anyhow::Result<()> {
    #[derive(Serialize, Deserialize)]
    struct Config {
        thresholds: CurationThresholds,
        resample_threshold: f64,
    }
    #[derive(Deserialize)]
    struct Human {
        critique_id: String,
        human: [f64; 3],
    }
    let config = Config {
        thresholds: cfg.section("thresholds", CurationThresholds::default())?,
        resample_threshold: cfg.section("resample_threshold", RESAMPLE_THRESHOLD)?,
    };
    let critiques: Vec<CritiqueRecord> = read(&a.critiques)?;
    let mos: HashMap<String, [f64; 3]> = read::<MosRecord>(&a.mos)?.into_iter().map(|m| (m.pair_id, m.mos)).collect();
    let human: HashMap<String, [f64; 3]> =
        read::<Human>(&a.human)?.into_iter().map(|h| (h.critique_id, h.human)).collect();

    let (mut kept, mut rejected, mut resample) = (Vec::new(), Vec::new(), Vec::new());
    let mut structural = 0usize;
    for c in &critiques {
        let body = match parse_critique(&c.text) {
            Ok(b) => b,
            Err(e) => {
                structural += 1;
                rejected.push(json!({ "critique_id": c.critique_id, "reasons": [{ "reason": "structural", "message": e.to_string() }] }));
                continue;
            }
        };
        let (Some(h), Some(m)) = (human.get(&c.critique_id), mos.get(&c.pair_id)) else {
            rejected.push(json!({ "critique_id": c.critique_id, "reasons": [{ "reason": "missing_reference" }] }));
            continue;
        };
        let generated = body.score_values();
        let flagged = resample_trigger(generated, *m, config.resample_threshold)?;
        if !flagged.is_empty() {
            resample.push(json!({ "critique_id": c.critique_id, "dimensions": flagged }));
        }
        let d = curate_cot(*h, generated, *m, config.thresholds)?;
        if d.keep {
            kept.push(c.clone());
        } else {
            rejected.push(json!({ "critique_id": c.critique_id, "reasons": d.reasons }));
        }
    }
    write_rows(&a.out.join("curated.jsonl"), &kept)?;
    write_rows(&a.out.join("rejected.jsonl"), &rejected)?;
    write_rows(&a.out.join("resample.jsonl"), &resample)?;
    let summary = json!({
        "total": critiques.len(),
        "kept": kept.len(),
        "rejected": rejected.len(),
        "structural_failures": structural,
        "resample_flagged": resample.len(),
    });
    emit(&summary, Some(&a.out.join("curation_report.json")))?;
    snapshot(&a.out, "curate", &a, &config)?;
    emit(&summary, None)
}

fn parse_ratios(s: &str) -> anyhow::Result<SplitRatios> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--ratios {s:?}: {e}")))?;
    let [train, val, test] = parts[..] else {
        return Err(usage(format!("--ratios needs three values, got {s:?}")));
    };
    Ok(SplitRatios { train, val, test })
}

fn split(a: SplitArgs, cfg: &Overrides) -> anyhow::Result<()> {
    let mut ratios = cfg.section("ratios", SplitRatios::default())?;
    if let Some(r) = &a.ratios {
        ratios = parse_ratios(r)?;
    }
    let triplets: Vec<EditTriplet> = read(&a.triplets)?;
    let critiques: Vec<CritiqueRecord> = a.critiques.as_deref().map(read).transpose()?.unwrap_or_default();
    let mos: Vec<MosRecord> = a.mos.as_deref().map(read).transpose()?.unwrap_or_default();
    let assignment = split_dataset(&triplets, ratios, a.seed)?;
    let mut summary = BTreeMap::new();
    for s in [Split::Train, Split::Val, Split::Test] {
        let dir = a.out.join(s.name());
        let t = assignment.triplets(&triplets, s);
        write_rows(&dir.join("triplets.jsonl"), &t)?;
        let sources: BTreeSet<&str> = t.iter().map(|x| x.source_id.as_str()).collect();
        let mut counts = json!({ "sources": sources.len(), "pairs": t.len() });
        if a.critiques.is_some() {
            let c = assignment.critiques(&critiques, s);
            write_rows(&dir.join("critiques.jsonl"), &c)?;
            counts["critiques"] = json!(c.len());
        }
        if a.mos.is_some() {
            let m = assignment.mos(&mos, s);
            write_rows(&dir.join("mos.jsonl"), &m)?;
            counts["mos"] = json!(m.len());
        }
        summary.insert(s.name(), counts);
    }
    emit(&summary, Some(&a.out.join("split_report.json")))?;
    snapshot(&a.out, "split", &a, &json!({ "ratios": ratios }))?;
    emit(&summary, None)
}

fn manifest(triplets: &Path, critiques: &Path) -> anyhow::Result<SamplingManifest> {
    let t: Vec<EditTriplet> = read(triplets)?;
    let c: Vec<CritiqueRecord> = read(critiques)?;
    let m = SamplingManifest::from_records(&t, &c)?;
    if m.is_empty() {
        bail!("sampling manifest is empty");
    }
    Ok(m)
}

fn sample(a: SampleArgs, cfg: &Overrides) -> anyhow::Result<()> {
    if a.epoch == 0 {
        return Err(usage("--epoch counts from 1"));
    }
    let caps = cfg.section("caps", SamplerCaps::default())?;
    let m = manifest(&a.triplets, &a.critiques)?;
    let s = build_epoch_sample(&m, a.epoch, a.seed, caps);
    if let Some(out) = &a.out {
        snapshot(&dir_of(out), "sample", &a, &json!({ "caps": caps }))?;
    }
    emit(&s, a.out.as_deref())
}

fn coverage(a: CoverageArgs, cfg: &Overrides) -> anyhow::Result<()> {
    let caps = cfg.section("caps", SamplerCaps::default())?;
    let m = manifest(&a.triplets, &a.critiques)?;
    let mut sampler = crate::dataset::StratifiedSampler::new(m.clone(), caps, a.seed);
    let mut samples = Vec::new();
    let mut report = coverage_report(&samples, &m);
    while samples.len() < a.max_epochs as usize && report.first_full_epoch.is_none() {
        samples.push(sampler.next_epoch());
        report = coverage_report(&samples, &m);
    }
    if let Some(out) = &a.out {
        snapshot(&dir_of(out), "coverage", &a, &json!({ "caps": caps }))?;
    }
    emit(&report, a.out.as_deref())
}

/// Reads either `ratings.jsonl` rows or rating-log events.
pub fn read_ratings(path: &Path) -> anyhow::Result<Vec<LikertRecord>> {
    let rows: Vec<Value> = read(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.into_iter().enumerate() {
        if row.get("scores").is_some() {
            let ev: RatingEvent = serde_json::from_value(row).with_context(|| format!("{}: row {}", path.display(), i + 1))?;
            out.extend(ev.likert_records());
        } else {
            out.push(serde_json::from_value(row).with_context(|| format!("{}: row {}", path.display(), i + 1))?);
        }
    }
    Ok(out)
}

/// Per-annotator bias screen over all of an annotator's scores.
fn bias_screen(records: &[LikertRecord], config: BiasConfig) -> BTreeMap<String, crate::stats::BiasReport> {
    let mut by: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for r in records {
        by.entry(&r.annotator_id).or_default().push(r.score);
    }
    by.into_iter().map(|(a, s)| (a.to_string(), detect_bias(&s, config))).collect()
}

fn flagged(screen: &BTreeMap<String, crate::stats::BiasReport>) -> BTreeSet<String> {
    screen.iter().filter(|(_, r)| r.verdict == BiasVerdict::Flagged).map(|(a, _)| a.clone()).collect()
}

fn aggregate(a: AggregateArgs, cfg: &Overrides) -> anyhow::Result<()> {
    let bias = cfg.section("bias", BiasConfig::default())?;
    let records = read_ratings(&a.ratings)?;
    let excluded = if a.exclude_flagged { flagged(&bias_screen(&records, bias)) } else { BTreeSet::new() };
    let targets = compute_reward_targets(&records, &excluded)?;
    let rows: Vec<RewardTargetRecord> = targets.iter().map(RewardTargetRecord::from).collect();
    write_rows(&a.out, &rows)?;
    snapshot(&dir_of(&a.out), "aggregate", &a, &json!({ "bias": bias }))?;
    emit(&json!({ "critiques": rows.len(), "records": records.len(), "excluded_annotators": excluded }), None)
}

fn reliability(a: ReliabilityArgs, cfg: &Overrides) -> anyhow::Result<()> {
    let bias = cfg.section("bias", BiasConfig::default())?;
    let records = read_ratings(&a.ratings)?;
    let screen = bias_screen(&records, bias);
    let excluded = if a.exclude_flagged { flagged(&screen) } else { BTreeSet::new() };
    let mut dims = BTreeMap::new();
    for d in Dimension::ALL {
        let raw = rating_matrix(&records, d, &excluded);
        let transformed = transformed_rating_matrix(&records, d, &excluded)?;
        let loo = leave_one_out_agreement(&transformed.values)?;
        let loo: Vec<Value> = loo
            .iter()
            .map(|l| json!({ "annotator": raw.annotators[l.annotator_index], "plcc": l.plcc, "srcc": l.srcc }))
            .collect();
        dims.insert(
            d.name(),
            json!({
                "annotators": raw.annotators.len(),
                "items": raw.items.len(),
                "kendalls_w": kendalls_w(&raw.values)?,
                "icc": icc(&transformed.values)?,
                "leave_one_out": loo,
            }),
        );
    }
    let doc = json!({ "dimensions": dims, "bias": screen, "excluded_annotators": excluded });
    if let Some(out) = &a.out {
        snapshot(&dir_of(out), "reliability", &a, &json!({ "bias": bias }))?;
        emit(&doc, Some(out))?;
    }
    if a.table {
        print!("{}", reliability_table(&rounded(&doc)?));
        Ok(())
    } else {
        emit(&doc, None)
    }
}

fn reliability_table(doc: &Value) -> String {
    let mut s = String::new();
    for d in Dimension::ALL {
        let v = &doc["dimensions"][d.name()];
        s.push_str(&format!("{}: W = {}  ICC(2,k) = {}\n", d.name(), v["kendalls_w"], v["icc"]));
        s.push_str("  annotator        plcc      srcc\n");
        for l in v["leave_one_out"].as_array().into_iter().flatten() {
            s.push_str(&format!(
                "  {:<14} {:>8} {:>9}\n",
                l["annotator"].as_str().unwrap_or(""),
                l["plcc"].to_string(),
                l["srcc"].to_string()
            ));
        }
    }
    s
}

fn row_id(row: &Value) -> anyhow::Result<String> {
    match row.get("id").or_else(|| row.get("critique_id")) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(v) => Ok(v.to_string()),
        None => bail!("row without \"id\": {row}"),
    }
}

/// The per-dimension triple of a row, if it carries one.
fn row_dims(row: &Value) -> Option<[f64; 3]> {
    let arr = row.get("scores").or_else(|| row.get("targets"))?.as_array()?;
    match arr.as_slice() {
        [a, b, c] => Some([a.as_f64()?, b.as_f64()?, c.as_f64()?]),
        _ => None,
    }
}

fn row_scalar(row: &Value) -> anyhow::Result<f64> {
    if let Some(x) = row.get("score").and_then(Value::as_f64) {
        return Ok(x);
    }
    row_dims(row).map(overall_from_dims).ok_or_else(|| anyhow!("row has neither \"score\" nor a 3-vector: {row}"))
}

fn by_id(rows: &[Value]) -> anyhow::Result<HashMap<String, &Value>> {
    let mut m = HashMap::with_capacity(rows.len());
    for r in rows {
        if m.insert(row_id(r)?, r).is_some() {
            bail!("duplicate id {}", row_id(r)?);
        }
    }
    Ok(m)
}

/// Prediction rows aligned to target order.
fn aligned<'a>(pred: &'a [Value], target: &'a [Value]) -> anyhow::Result<Vec<(&'a Value, &'a Value)>> {
    let p = by_id(pred)?;
    target
        .iter()
        .map(|t| {
            let id = row_id(t)?;
            p.get(&id).map(|r| (*r, t)).ok_or_else(|| anyhow!("no prediction for id {id}"))
        })
        .collect()
}

fn correlations(p: &[f64], t: &[f64]) -> anyhow::Result<Value> {
    Ok(json!({ "srcc": srcc(p, t)?, "krcc": krcc_tau_b(p, t)?, "plcc": plcc(p, t)? }))
}

fn eval_metrics(a: EvalMetricsArgs) -> anyhow::Result<()> {
    let pred: Vec<Value> = read(&a.pred)?;
    let target: Vec<Value> = read(&a.target)?;
    let doc = match a.metric {
        Some(MetricName::Pairacc) => {
            let scores: HashMap<String, f64> =
                pred.iter().map(|r| Ok((row_id(r)?, row_scalar(r)?))).collect::<anyhow::Result<_>>()?;
            let prefs = target
                .iter()
                .map(|r| {
                    let get = |k: &str| -> anyhow::Result<f64> {
                        let id = r.get(k).and_then(Value::as_str).ok_or_else(|| anyhow!("preference row lacks {k:?}: {r}"))?;
                        scores.get(id).copied().ok_or_else(|| anyhow!("no prediction for id {id}"))
                    };
                    let choice = match r.get("choice").and_then(Value::as_str) {
                        Some("A" | "a") => Choice::A,
                        Some("B" | "b") => Choice::B,
                        _ => bail!("preference row needs \"choice\": \"A\" or \"B\": {r}"),
                    };
                    Ok(Preference { pred_a: get("a")?, pred_b: get("b")?, human_choice: choice })
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            json!({ "metric": "pairacc", "n": prefs.len(), "value": pairwise_accuracy(&prefs)? })
        }
        Some(MetricName::Rouge1) => {
            let pairs = aligned(&pred, &target)?;
            let mut total = 0.0;
            for (p, t) in &pairs {
                let text = |r: &Value| r.get("text").and_then(Value::as_str).map(tokenize).ok_or_else(|| anyhow!("row lacks \"text\": {r}"));
                total += rouge1(&text(p)?, &text(t)?)?;
            }
            if pairs.is_empty() {
                bail!("no rows to compare");
            }
            json!({ "metric": "rouge1", "n": pairs.len(), "value": total / pairs.len() as f64 })
        }
        metric => {
            let pairs = aligned(&pred, &target)?;
            let p: Vec<f64> = pairs.iter().map(|(p, _)| row_scalar(p)).collect::<anyhow::Result<_>>()?;
            let t: Vec<f64> = pairs.iter().map(|(_, t)| row_scalar(t)).collect::<anyhow::Result<_>>()?;
            match metric {
                Some(m) => {
                    let value = match m {
                        MetricName::Srcc => srcc(&p, &t)?,
                        MetricName::Krcc => krcc_tau_b(&p, &t)?,
                        _ => plcc(&p, &t)?,
                    };
                    json!({ "metric": m, "n": p.len(), "value": value })
                }
                None => {
                    let mut v = correlations(&p, &t)?;
                    v["n"] = json!(p.len());
                    v
                }
            }
        }
    };
    if let Some(out) = &a.out {
        snapshot(&dir_of(out), "eval-metrics", &a, &json!({}))?;
    }
    emit(&doc, a.out.as_deref())
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let pred: Vec<Value> = read(&a.pred)?;
    let target: Vec<Value> = read(&a.target)?;
    let pairs = aligned(&pred, &target)?;
    let p: Vec<f64> = pairs.iter().map(|(p, _)| row_scalar(p)).collect::<anyhow::Result<_>>()?;
    let t: Vec<f64> = pairs.iter().map(|(_, t)| row_scalar(t)).collect::<anyhow::Result<_>>()?;
    let mut doc = correlations(&p, &t)?;
    doc["n"] = json!(p.len());
    let dims: Option<Vec<([f64; 3], [f64; 3])>> = pairs.iter().map(|(p, t)| Some((row_dims(p)?, row_dims(t)?))).collect();
    if let Some(dims) = dims {
        let mut per = serde_json::Map::new();
        for d in Dimension::ALL {
            let pd: Vec<f64> = dims.iter().map(|(p, _)| p[d.index()]).collect();
            let td: Vec<f64> = dims.iter().map(|(_, t)| t[d.index()]).collect();
            per.insert(d.name().to_string(), correlations(&pd, &td)?);
        }
        doc["per_dimension"] = Value::Object(per);
    }
    if let Some(out) = &a.out {
        snapshot(&dir_of(out), "report", &a, &json!({}))?;
        emit(&doc, Some(out))?;
    }
    if a.table {
        let doc = rounded(&doc)?;
        let mut rows = vec![("overall".to_string(), &doc)];
        for d in Dimension::ALL {
            if let Some(v) = doc.get("per_dimension").and_then(|p| p.get(d.name())) {
                rows.push((d.name().to_string(), v));
            }
        }
        println!("{:<12} {:>9} {:>9} {:>9}", "", "srcc", "krcc", "plcc");
        for (name, v) in rows {
            println!("{name:<12} {:>9} {:>9} {:>9}", v["srcc"].to_string(), v["krcc"].to_string(), v["plcc"].to_string());
        }
        Ok(())
    } else {
        emit(&doc, None)
    }
}

/// Shape of the generated data for `--manifest synthetic` / `--prompts synthetic`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub prompt_words: usize,
    /// Fixes the hidden target function; shared by SFT and GRPO runs.
    pub task_seed: u64,
    pub n_cot: usize,
    pub n_score_only: usize,
    pub n_val: usize,
    pub n_prompts: usize,
    /// MOS-bearing prompts out of every ten.
    pub mos_per_ten: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { prompt_words: 8, task_seed: 0, n_cot: 160, n_score_only: 40, n_val: 100, n_prompts: 100, mos_per_ten: 7 }
    }
}

fn train_sft(a: TrainSftArgs, cfg: &Overrides) -> anyhow::Result<()> {
    let model_cfg = cfg.section("model", ToyBackboneConfig { seed: a.seed, ..ToyBackboneConfig::default() })?;
    let sft = cfg.section("sft", SftConfig { seed: a.seed, ..SftConfig::default() })?;
    let synth = cfg.section("synthetic", SyntheticConfig::default())?;
    let schedule = match a.schedule.as_str() {
        "default" => SftSchedule::default(),
        "single" => SftSchedule::single_dual_task_epoch(),
        path => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading schedule {path}"))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("--schedule {path}: {e}")))?
        }
    };
    let (train, val): (Vec<SftSample>, Vec<SftSample>) = if a.manifest == "synthetic" {
        let task = SyntheticTask::new(model_cfg.vocab_size, synth.prompt_words, synth.task_seed);
        (
            task.dataset(synth.n_cot, synth.n_score_only, splitmix64(a.seed ^ 1)),
            task.dataset(0, synth.n_val, splitmix64(a.seed ^ 2)),
        )
    } else {
        (read(Path::new(&a.manifest))?, a.val.as_deref().map(read).transpose()?.unwrap_or_default())
    };
    let mut model = DualHeadModel::new(model_cfg, HeadVariant::Evaluator)?;
    let run = run_sft(&mut model, &train, &schedule, &sft, &val)?;
    write_file(&a.out.join("checkpoint.json"), checkpoint::to_json(&model).as_bytes())?;
    write_rows(&a.out.join("telemetry.jsonl"), &run.telemetry)?;
    snapshot(&a.out, "train-sft", &a, &json!({ "model": model_cfg, "sft": sft, "schedule": schedule, "synthetic": synth }))?;
    let first = run.telemetry.first().map_or(f64::NAN, |t| t.loss_total);
    let last = run.telemetry.last().map_or(f64::NAN, |t| t.loss_total);
    emit(
        &json!({
            "epochs": run.telemetry.len(),
            "train_samples": train.len(),
            "loss_first_epoch": first,
            "loss_last_epoch": last,
            "final_val_srcc": run.final_val_srcc,
        }),
        None,
    )
}

fn synthetic_prompts(task: &SyntheticTask, synth: &SyntheticConfig, seed: u64) -> Vec<PromptRecord> {
    task.dataset(0, synth.n_prompts, seed)
        .into_iter()
        .enumerate()
        .map(|(i, s)| PromptRecord {
            prompt_id: format!("p{i:04}"),
            source_image: String::new(),
            edited_image: String::new(),
            instruction: String::new(),
            tokens: Some(s.prompt),
            mos: (i % 10 < synth.mos_per_ten).then_some(s.targets),
        })
        .collect()
}

fn train_grpo_cmd(a: TrainGrpoArgs, cfg: &Overrides) -> anyhow::Result<()> {
    let grpo = cfg.section("grpo", GrpoConfig { seed: a.seed, ..GrpoConfig::default() })?;
    let synth = cfg.section("synthetic", SyntheticConfig::default())?;
    let toy_target: String = cfg.section("toy_target", "t13".to_string())?;
    let mut policy = checkpoint::load(&a.policy)?;
    let reference = policy.clone();
    let task = SyntheticTask::new(policy.config.vocab_size, synth.prompt_words, synth.task_seed);
    let prompts = if a.prompts == "synthetic" {
        synthetic_prompts(&task, &synth, splitmix64(a.seed ^ 3))
    } else {
        read(Path::new(&a.prompts))?
    };
    let probe: Vec<SftSample> = match &a.probe {
        Some(p) => read(p)?,
        None if a.prompts == "synthetic" => task.dataset(0, synth.n_val, splitmix64(a.seed ^ 2)),
        None => Vec::new(),
    };
    let client: Box<dyn RewardClient> = match a.reward_url.as_str() {
        "toy" => Box::new(InProcessRewardClient { scorer: TargetWordScorer { target: toy_target.clone() } }),
        url if url.starts_with("http://") || url.starts_with("https://") => Box::new(HttpRewardClient::new(url)),
        other => return Err(usage(format!("--reward-url must be `toy` or an http(s) URL, got {other:?}"))),
    };
    let run = train_grpo(&mut policy, &reference, client.as_ref(), &prompts, &probe, &grpo)?;
    write_file(&a.out.join("policy.json"), checkpoint::to_json(&policy).as_bytes())?;
    write_rows(&a.out.join("telemetry.jsonl"), &run.telemetry)?;
    snapshot(&a.out, "train-grpo", &a, &json!({ "grpo": grpo, "synthetic": synth, "toy_target": toy_target }))?;
    let mean = |xs: &[crate::grpo::GrpoTelemetry]| xs.iter().map(|t| t.mean_reward).sum::<f64>() / xs.len().max(1) as f64;
    let w = run.telemetry.len().min(20);
    emit(
        &json!({
            "steps": run.telemetry.len(),
            "mean_reward_first": mean(&run.telemetry[..w]),
            "mean_reward_last": mean(&run.telemetry[run.telemetry.len() - w..]),
            "initial_probe_srcc": run.initial_probe_srcc,
            "final_probe_srcc": run.final_probe_srcc,
        }),
        None,
    )
}

/// Builds a scorer from `hash`, `constant:L,A,U`, `model:CKPT` or `proxy:URL`.
pub fn parse_backend(spec: &str) -> anyhow::Result<Arc<dyn Scorer>> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    Ok(match kind {
        "hash" | "toy" => Arc::new(HashScorer::default()),
        "constant" => {
            let v: Vec<f64> = arg
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| usage(format!("--backend {spec:?}: {e}")))?;
            let [l, a, u] = v[..] else {
                return Err(usage(format!("--backend constant needs three values, got {spec:?}")));
            };
            Arc::new(ConstantScorer([l, a, u]))
        }
        "model" if !arg.is_empty() => Arc::new(ModelScorer { model: checkpoint::load(Path::new(arg))? }),
        "proxy" if !arg.is_empty() => Arc::new(ProxyScorer::new(arg)),
        _ => return Err(usage(format!("unknown backend {spec:?} (hash, constant:L,A,U, model:CKPT, proxy:URL)"))),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ServeLimits {
    max_batch: usize,
    timeout_secs: f64,
    concurrent_batches: usize,
}

fn serve_cmd(a: ServeArgs, cfg: &Overrides) -> anyhow::Result<()> {
    let d = ScoringLimits::default();
    let limits = cfg.section(
        "serve",
        ServeLimits {
            max_batch: d.max_batch,
            timeout_secs: d.request_timeout.as_secs_f64(),
            concurrent_batches: d.concurrent_batches,
        },
    )?;
    if limits.max_batch == 0 || !(limits.timeout_secs > 0.0) {
        return Err(usage("serve.max_batch and serve.timeout_secs must be positive"));
    }
    let bind: SocketAddr = a.bind.parse().map_err(|e| usage(format!("--bind {:?}: {e}", a.bind)))?;
    let scorer = parse_backend(&a.backend)?;
    let annotators: BTreeSet<String> = a
        .annotators
        .as_deref()
        .unwrap_or("")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    let config = ServeConfig {
        bind,
        limits: ScoringLimits {
            max_batch: limits.max_batch,
            request_timeout: Duration::from_secs_f64(limits.timeout_secs),
            concurrent_batches: limits.concurrent_batches,
        },
        data_dir: a.data_dir.clone(),
        tasks: a.tasks.clone(),
        annotators,
        seed_salt: a.seed_salt,
    };
    if let Some(dir) = &a.data_dir {
        snapshot(dir, "serve", &a, &json!({ "serve": limits }))?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(&config, scorer, |addr| {
        println!("{}", json!({ "listening": addr.to_string() }));
        let _ = std::io::stdout().flush();
    }))
}

fn score(a: ScoreArgs) -> anyhow::Result<()> {
    let raw: Vec<Value> = read(&a.items)?;
    if raw.is_empty() {
        bail!("no items in {}", a.items.display());
    }
    let mut results: Vec<Option<ItemResult>> = vec![None; raw.len()];
    let mut valid = Vec::new();
    let mut positions = Vec::new();
    for (i, v) in raw.iter().enumerate() {
        match ScoreItem::from_value(v) {
            Ok(item) => {
                valid.push(item);
                positions.push(i);
            }
            Err(fields) => results[i] = Some(ItemResult::Invalid(ItemError { error: "validation".into(), fields })),
        }
    }
    let dims: Vec<[f64; 3]> = match &a.url {
        Some(url) => {
            let mut out = Vec::with_capacity(valid.len());
            for chunk in valid.chunks(ScoringLimits::default().max_batch) {
                for r in post_score_batch(url, chunk, Duration::from_secs(30))?.items {
                    match r {
                        ItemResult::Scored(s) => out.push(s.dims()),
                        ItemResult::Invalid(e) => bail!("service rejected a locally valid item: {}", e.error),
                    }
                }
            }
            out
        }
        None if valid.is_empty() => Vec::new(),
        None => parse_backend(&a.backend)?.score(&valid)?,
    };
    for (pos, d) in positions.into_iter().zip(dims) {
        results[pos] = Some(ItemResult::Scored(ScoredItem::from_dims(d)));
    }
    let rows: Vec<ItemResult> = results.into_iter().map(|r| r.expect("every slot filled")).collect();
    let invalid = rows.iter().filter(|r| matches!(r, ItemResult::Invalid(_))).count();
    match &a.out {
        Some(out) => {
            write_rows(out, &rows)?;
            snapshot(&dir_of(out), "score", &a, &json!({}))?;
            emit(&json!({ "items": rows.len(), "scored": rows.len() - invalid, "invalid": invalid }), None)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for r in &rows {
                writeln!(stdout, "{}", serde_json::to_string(&rounded(r)?)?)?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_overrides_nested_fields() {
        let cfg = Overrides(json!({ "grpo": { "kl_beta": 0.1, "optimizer": { "lr": 0.5 } } }));
        let g = cfg.section("grpo", GrpoConfig::default()).unwrap();
        assert_eq!(g.kl_beta, 0.1);
        assert_eq!(g.optimizer.lr, 0.5);
        assert_eq!(g.group_size, 4);
        assert_eq!(g.optimizer.weight_decay, 0.0);
    }

    #[test]
    fn bad_override_is_usage_error() {
        let cfg = Overrides(json!({ "caps": { "max_pairs_per_source": "six" } }));
        let e = cfg.section("caps", SamplerCaps::default()).unwrap_err();
        assert!(e.is::<UsageError>());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(dispatch(["critic-kit", "frobnicate"]), 2);
        assert_eq!(dispatch(["critic-kit", "aggregate", "--ratings", "/nonexistent/r.jsonl", "--out", "/tmp/x.jsonl"]), 1);
        assert_eq!(dispatch(["critic-kit", "split", "--triplets", "t", "--ratios", "1,2", "--out", "o"]), 2);
        assert_eq!(dispatch(["critic-kit", "--help"]), 0);
    }

    #[test]
    fn backend_specs() {
        assert_eq!(parse_backend("constant:1,0,0").unwrap().score(&[]).unwrap().len(), 0);
        assert!(parse_backend("constant:1,0").err().unwrap().is::<UsageError>());
        assert!(parse_backend("nope").err().unwrap().is::<UsageError>());
        assert_eq!(parse_backend("hash").unwrap().name(), "hash");
    }

    #[test]
    fn ratios_flag() {
        let r = parse_ratios("0.7, 0.2, 0.1").unwrap();
        assert_eq!((r.train, r.val, r.test), (0.7, 0.2, 0.1));
    }
}
