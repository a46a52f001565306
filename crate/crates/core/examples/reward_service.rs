//! Starts the scoring + annotation service on an ephemeral port, scores a
//! mixed batch over HTTP and walks one annotator through two tasks.

use std::sync::Arc;

use critic_kit::service::{serve, ConstantScorer, ServeConfig, TaskSpec};
use critic_kit::util::write_jsonl;
use serde_json::{json, Value};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let tasks: Vec<TaskSpec> = (0..2)
        .map(|i| TaskSpec {
            critique_id: format!("c{i}"),
            source_image: format!("src/{i}.png"),
            edited_image: format!("edit/{i}.png"),
            instruction: "remove the lamp post".into(),
            critique_text: "The lamp post is gone; the wall texture is smeared.".into(),
        })
        .collect();
    write_jsonl(dir.path().join("tasks.jsonl"), &tasks)?;
    let config = ServeConfig {
        bind: "127.0.0.1:0".parse()?,
        data_dir: Some(dir.path().to_path_buf()),
        tasks: Some(dir.path().join("tasks.jsonl")),
        ..ServeConfig::default()
    };

    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        rt.block_on(serve(&config, Arc::new(ConstantScorer([1.0, 0.0, 0.0])), |addr| tx.send(addr).expect("send")))
            .expect("serve");
    });
    let base = format!("http://{}", rx.recv()?);
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();

    let item = json!({"source_image": "a.png", "edited_image": "b.png", "instruction": "x", "critic": "fine"});
    let mut resp = agent
        .post(&format!("{base}/v1/score"))
        .send_json(json!({ "items": [item, {"source_image": "a.png"}] }))?;
    println!("POST /v1/score -> {}", resp.status());
    println!("{}", serde_json::to_string_pretty(&resp.body_mut().read_json::<Value>()?)?);

    loop {
        let mut r = agent.get(&format!("{base}/tasks/next?annotator=ann-1")).call()?;
        if r.status() == 204 {
            println!("pool exhausted");
            break;
        }
        let task: Value = r.body_mut().read_json()?;
        let id = task["task_id"].as_str().unwrap_or_default().to_string();
        let ack = agent.post(&format!("{base}/ratings")).send_json(json!({
            "task_id": id,
            "annotator": "ann-1",
            "scores": {"logicality": 5, "accuracy": 4, "usefulness": 5},
        }))?;
        println!("rated {id}: {}", ack.status());
    }
    let progress: Value = agent.get(&format!("{base}/progress?annotator=ann-1")).call()?.body_mut().read_json()?;
    println!("progress {progress}");
    Ok(())
}
