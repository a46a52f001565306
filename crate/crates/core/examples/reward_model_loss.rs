//! Fits a linear scorer on synthetic features with the composite reward-model
//! objective (Huber + margin rank + PLCC over history queues).

use critic_kit::losses::RewardModelObjective;
use critic_kit::metrics::srcc;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 6;
    let truth: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let data: Vec<(Vec<f64>, f64)> = (0..512)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.1..0.1);
            (x, y)
        })
        .collect();

    let mut w = vec![0.0; dim];
    let mut objective = RewardModelObjective::default();
    let lr = 0.05;
    for step in 0..400 {
        let batch: Vec<&(Vec<f64>, f64)> = (0..16).map(|_| &data[rng.gen_range(0..data.len())]).collect();
        let pred: Vec<f64> = batch.iter().map(|(x, _)| x.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
        let target: Vec<f64> = batch.iter().map(|(_, y)| *y).collect();
        let out = objective.step(&pred, &target)?;
        for (i, (x, _)) in batch.iter().enumerate() {
            for (wj, xj) in w.iter_mut().zip(x) {
                *wj -= lr * out.total.grad[i] * xj;
            }
        }
        if step % 100 == 0 {
            println!(
                "step {step:3}: total {:.4} (huber {:.4}, rank {:.4}, plcc {:.4})",
                out.total.value, out.huber.value, out.rank.value, out.plcc.value
            );
        }
    }
    let pred: Vec<f64> = data.iter().map(|(x, _)| x.iter().zip(&w).map(|(a, b)| a * b).sum()).collect();
    let target: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
    println!("train srcc {:.4}", srcc(&pred, &target)?);
    Ok(())
}
