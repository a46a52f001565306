//! Trains the dual-head toy model on synthetic data with the default
//! six-epoch mixed schedule and prints per-epoch telemetry.

use critic_kit::model::{run_sft, DualHeadModel, HeadVariant, SftConfig, SftSchedule, SyntheticTask, ToyBackboneConfig};

fn main() -> anyhow::Result<()> {
    let task = SyntheticTask::new(64, 8, 0);
    let train = task.dataset(160, 40, 1);
    let held_out = task.dataset(0, 100, 2);

    let mut model = DualHeadModel::new(ToyBackboneConfig::default(), HeadVariant::Evaluator)?;
    let run = run_sft(&mut model, &train, &SftSchedule::default(), &SftConfig::default(), &held_out)?;
    for t in &run.telemetry {
        println!("{}", serde_json::to_string(t)?);
    }
    let first = run.telemetry.first().map_or(0.0, |t| t.loss_total);
    let last = run.telemetry.last().map_or(0.0, |t| t.loss_total);
    println!("loss drop: {:.1}%", 100.0 * (1.0 - last / first));
    println!("held-out srcc: {:.4}", run.final_val_srcc.unwrap_or(f64::NAN));
    Ok(())
}
