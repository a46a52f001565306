//! End-to-end runs of the `critic-kit` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_critic-kit")).args(args).output().expect("spawn critic-kit")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write_jsonl(path: &Path, rows: &[Value]) {
    let text: String = rows.iter().map(|r| format!("{r}\n")).collect();
    std::fs::write(path, text).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ratings_rows() -> Vec<Value> {
    let table = [
        ("c1", "alice", [5, 4, 4]),
        ("c2", "alice", [2, 3, 1]),
        ("c3", "alice", [4, 4, 5]),
        ("c1", "bob", [4, 5, 5]),
        ("c2", "bob", [1, 2, 2]),
        ("c3", "bob", [3, 3, 4]),
    ];
    let dims = ["logicality", "accuracy", "usefulness"];
    table
        .iter()
        .flat_map(|(c, a, s)| {
            dims.iter().zip(s).map(move |(d, x)| json!({"critique_id": c, "annotator_id": a, "dimension": d, "score": x}))
        })
        .collect()
}

#[test]
fn aggregate_writes_one_row_per_critique() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.jsonl");
    let out = dir.path().join("targets.jsonl");
    write_jsonl(&ratings, &ratings_rows());
    let o = run(&["aggregate", "--ratings", p(&ratings), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout_json(&o);
    assert_eq!(summary["critiques"], 3);
    assert_eq!(summary["records"], 18);
    let rows: Vec<Value> =
        std::fs::read_to_string(&out).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["targets"].as_array().map(Vec::len) == Some(3) && r["n_annotators"] == 2));
    let snapshot: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run_config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["subcommand"], "aggregate");
}

#[test]
fn aggregate_reads_service_rating_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("ratings_log.jsonl");
    write_jsonl(
        &log,
        &[json!({"ts": 1, "task_id": "c9", "annotator": "ann", "scores": {"logicality": 5, "accuracy": 5, "usefulness": 5}})],
    );
    let out = dir.path().join("targets.jsonl");
    let o = run(&["aggregate", "--ratings", p(&log), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["records"], 3);
}

#[test]
fn report_has_overall_and_per_dimension_keys() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    let target = dir.path().join("target.jsonl");
    let rows = |offs: [f64; 3]| -> Vec<Value> {
        (0..8)
            .map(|i| {
                let x = f64::from(i) / 8.0;
                json!({"id": format!("c{i}"), "scores": [x + offs[0] * (x * 7.0).sin(), x * x + offs[1], 1.0 - x + offs[2] * (x * 3.0).cos()]})
            })
            .collect()
    };
    write_jsonl(&pred, &rows([0.1, 0.0, 0.05]));
    write_jsonl(&target, &rows([0.0, 0.0, 0.0]));
    let o = run(&["report", "--pred", p(&pred), "--target", p(&target)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = stdout_json(&o);
    for key in ["srcc", "krcc", "plcc"] {
        assert!(doc[key].is_number(), "{key}");
        for d in ["logicality", "accuracy", "usefulness"] {
            assert!(doc["per_dimension"][d][key].is_number(), "{d}.{key}");
        }
    }
    assert_eq!(doc["n"], 8);
    assert_eq!(doc["per_dimension"]["accuracy"]["srcc"], 1.0);
}

#[test]
fn eval_metrics_single_metric() {
    let dir = tempfile::tempdir().unwrap();
    let pred = dir.path().join("pred.jsonl");
    let target = dir.path().join("target.jsonl");
    write_jsonl(&pred, &(0..5).map(|i| json!({"id": i.to_string(), "score": f64::from(i)})).collect::<Vec<_>>());
    write_jsonl(&target, &(0..5).map(|i| json!({"id": i.to_string(), "score": f64::from(4 - i)})).collect::<Vec<_>>());
    let o = run(&["eval-metrics", "--pred", p(&pred), "--target", p(&target), "--metric", "krcc"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = stdout_json(&o);
    assert_eq!((doc["metric"].as_str(), doc["n"].as_u64(), doc["value"].as_f64()), (Some("krcc"), Some(5), Some(-1.0)));
}

#[test]
fn usage_and_domain_errors_use_distinct_exit_codes() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["report"]).status.code(), Some(2));

    let o = run(&["aggregate", "--ratings", "/nonexistent/ratings.jsonl", "--out", "/nonexistent/out.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "domain");
    assert!(err["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[test]
fn split_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let triplets = dir.path().join("triplets.jsonl");
    let rows: Vec<Value> = (0..30)
        .flat_map(|s| {
            (0..3).map(move |k| {
                json!({
                    "source_id": format!("s{s:02}"),
                    "pair_id": format!("s{s:02}-p{k}"),
                    "source_image": format!("src/{s}.png"),
                    "edited_image": format!("edit/{s}-{k}.png"),
                    "instruction": "add a hat",
                    "task_type": "add",
                })
            })
        })
        .collect();
    write_jsonl(&triplets, &rows);
    let out = dir.path().join("splits");
    let read_all = || {
        ["train/triplets.jsonl", "val/triplets.jsonl", "test/triplets.jsonl", "split_report.json", "run_config.json"]
            .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let args = ["split", "--triplets", p(&triplets), "--seed", "3", "--out", p(&out)];
    assert!(run(&args).status.success());
    let first = read_all();
    assert!(run(&args).status.success());
    assert_eq!(first, read_all());

    let report: Value = serde_json::from_slice(&first[3]).unwrap();
    let pairs: u64 = ["train", "val", "test"].iter().map(|s| report[s]["pairs"].as_u64().unwrap()).sum();
    assert_eq!(pairs, 90);
}

#[test]
fn config_overrides_reach_the_run_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, r#"{"bias": {"min_records": 2}}"#).unwrap();
    let ratings = dir.path().join("ratings.jsonl");
    write_jsonl(&ratings, &ratings_rows());
    let out = dir.path().join("targets.jsonl");
    let o = run(&["--config", p(&config), "aggregate", "--ratings", p(&ratings), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let snapshot: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run_config.json")).unwrap()).unwrap();
    assert_eq!(snapshot["config"]["bias"]["min_records"], 2);

    std::fs::write(&config, "[1, 2]").unwrap();
    assert_eq!(run(&["--config", p(&config), "aggregate", "--ratings", p(&ratings), "--out", p(&out)]).status.code(), Some(2));
}

#[test]
fn training_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"synthetic": {"n_cot": 16, "n_score_only": 4, "n_val": 10, "n_prompts": 10},
            "model": {"hidden_size": 16, "max_seq_len": 64},
            "grpo": {"steps": 3, "max_completion_len": 4, "probe_every": 0}}"#,
    )
    .unwrap();
    let sft = |out: &Path| {
        let o = run(&["--config", p(&config), "train-sft", "--manifest", "synthetic", "--seed", "1", "--out", p(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(out.join("checkpoint.json")).unwrap(), std::fs::read(out.join("telemetry.jsonl")).unwrap())
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(sft(&a), sft(&b));

    let ckpt = a.join("checkpoint.json");
    let grpo = |out: &Path| {
        let args = ["--config", p(&config), "train-grpo", "--policy", p(&ckpt), "--reward-url", "toy"];
        let o = run(&[&args[..], &["--prompts", "synthetic", "--seed", "2", "--out", p(out)]].concat());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout_json(&o)["steps"], 3);
        std::fs::read(out.join("policy.json")).unwrap()
    };
    assert_eq!(grpo(&dir.path().join("g1")), grpo(&dir.path().join("g2")));
}
