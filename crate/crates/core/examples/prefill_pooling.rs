//! The regression head reads the hidden state at the last prompt position,
//! so a score computed alone matches the score taken after generating a
//! critique bit for bit. Anchor pooling instead depends on the response.

use critic_kit::model::vocab::ANCHOR;
use critic_kit::model::{
    generate, DualHeadModel, HeadVariant, ModelError, PoolStrategy, SamplingConfig, SyntheticTask, ToyBackboneConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let model = DualHeadModel::new(ToyBackboneConfig::default(), HeadVariant::Evaluator)?;
    let task = SyntheticTask::new(64, 8, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sampling = SamplingConfig { stop_token: None, max_new: 12, ..SamplingConfig::default() };

    let mut identical = 0;
    let trials = 200;
    for i in 0..trials {
        let prompt = task.prompt(&mut rng);
        let alone = model.score(&prompt)?;
        let g = generate(&model, &prompt, &sampling, i)?;
        let mut seq = prompt.clone();
        seq.extend_from_slice(&g.tokens);
        let after = model.forward(&seq, prompt.len())?.scores;
        identical += usize::from(alone.map(f64::to_bits) == after.map(f64::to_bits));
    }
    println!("prefill pooling: {identical}/{trials} bit-identical");

    let prompt = task.prompt(&mut rng);
    let anchored =
        model.forward_with(&prompt, prompt.len(), PoolStrategy::AnchorToken { anchor: ANCHOR }, None::<&mut ChaCha8Rng>);
    match anchored {
        Err(ModelError::AnchorNotFound(t)) => println!("anchor pooling without token {t}: AnchorNotFound"),
        other => println!("unexpected: {:?}", other.map(|(o, _)| o.scores)),
    }
    Ok(())
}
