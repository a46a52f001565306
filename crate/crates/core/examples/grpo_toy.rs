//! SFT warm start followed by 500 GRPO steps against a target-token reward,
//! tracking the regression probe alongside the reward.

use critic_kit::grpo::{train_grpo, GrpoConfig, InProcessRewardClient, PromptRecord};
use critic_kit::model::{run_sft, DualHeadModel, HeadVariant, SftConfig, SftSchedule, SyntheticTask, ToyBackboneConfig};
use critic_kit::service::TargetWordScorer;

fn main() -> anyhow::Result<()> {
    let task = SyntheticTask::new(64, 8, 0);
    let probe = task.dataset(0, 100, 2);
    let mut policy = DualHeadModel::new(ToyBackboneConfig::default(), HeadVariant::Evaluator)?;
    run_sft(&mut policy, &task.dataset(160, 40, 1), &SftSchedule::default(), &SftConfig::default(), &probe)?;
    let reference = policy.clone();

    // Seven in ten prompts carry MOS targets for the auxiliary Huber term.
    let prompts: Vec<PromptRecord> = task
        .dataset(0, 100, 3)
        .into_iter()
        .enumerate()
        .map(|(i, s)| PromptRecord {
            prompt_id: format!("p{i}"),
            source_image: String::new(),
            edited_image: String::new(),
            instruction: String::new(),
            tokens: Some(s.prompt),
            mos: (i % 10 < 7).then_some(s.targets),
        })
        .collect();
    let client = InProcessRewardClient { scorer: TargetWordScorer { target: "t13".into() } };
    let config = GrpoConfig { max_completion_len: 12, ..GrpoConfig::default() };
    let run = train_grpo(&mut policy, &reference, &client, &prompts, &probe, &config)?;

    for t in run.telemetry.iter().filter(|t| t.probe_srcc.is_some()) {
        println!(
            "step {:3}: reward {:.3}  kl {:.4}  probe srcc {:.4}",
            t.step,
            t.mean_reward,
            t.kl,
            t.probe_srcc.unwrap_or(f64::NAN)
        );
    }
    println!(
        "probe srcc {:.4} -> {:.4}",
        run.initial_probe_srcc.unwrap_or(f64::NAN),
        run.final_probe_srcc.unwrap_or(f64::NAN)
    );
    Ok(())
}
