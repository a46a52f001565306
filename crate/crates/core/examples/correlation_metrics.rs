//! Rank and linear correlations, pairwise accuracy and ROUGE-1.

use critic_kit::metrics::{krcc_tau_b, pairwise_accuracy, plcc, rouge1, srcc, tokenize, Choice, Preference};

fn main() -> anyhow::Result<()> {
    let pred = [0.1, 0.4, 0.4, 0.8, 0.9, 0.3];
    let human = [1.0, 2.0, 3.0, 4.0, 4.0, 2.0];
    println!("srcc {:.4}", srcc(&pred, &human)?);
    println!("krcc {:.4}", krcc_tau_b(&pred, &human)?);
    println!("plcc {:.4}", plcc(&pred, &human)?);

    let prefs = [
        Preference { pred_a: 0.9, pred_b: 0.2, human_choice: Choice::A },
        Preference { pred_a: 0.3, pred_b: 0.6, human_choice: Choice::A },
        Preference { pred_a: 0.5, pred_b: 0.5, human_choice: Choice::B },
    ];
    // Tie counts as half a match: (1 + 0 + 0.5) / 3.
    println!("pairwise accuracy {:.4}", pairwise_accuracy(&prefs)?);

    let cand = tokenize("The sky was brightened but the clouds lost detail");
    let reference = tokenize("the sky is brighter and cloud detail was lost");
    println!("rouge-1 {:.4}", rouge1(&cand, &reference)?);
    Ok(())
}
