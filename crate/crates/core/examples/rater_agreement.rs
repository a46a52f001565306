//! Kendall's W, ICC(2,k), leave-one-out agreement and the bias screen on a
//! simulated panel where one annotator always answers 5.

use std::collections::BTreeSet;

use critic_kit::stats::{
    detect_bias, icc, kendalls_w, leave_one_out_agreement, rating_matrix, transformed_rating_matrix, BiasConfig,
    Dimension, LikertRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let quality: Vec<f64> = (0..40).map(|_| rng.gen_range(1.0..5.0)).collect();
    let mut records = Vec::new();
    for (a, name) in ["ann-a", "ann-b", "ann-c", "lenient"].iter().enumerate() {
        for (j, q) in quality.iter().enumerate() {
            let score = if a == 3 { 5 } else { (q + rng.gen_range(-0.8..0.8)).round().clamp(1.0, 5.0) as u8 };
            records.push(LikertRecord {
                critique_id: format!("c{j:02}"),
                annotator_id: name.to_string(),
                dimension: Dimension::Logicality,
                score,
            });
        }
    }

    for name in ["ann-a", "lenient"] {
        let scores: Vec<u8> = records.iter().filter(|r| r.annotator_id == name).map(|r| r.score).collect();
        let b = detect_bias(&scores, BiasConfig::default());
        println!("{name}: {:?} (mean {:.2}, variance {:.2})", b.verdict, b.mean, b.variance);
    }

    let excluded: BTreeSet<String> = ["lenient".to_string()].into();
    let raw = rating_matrix(&records, Dimension::Logicality, &excluded);
    let t = transformed_rating_matrix(&records, Dimension::Logicality, &excluded)?;
    println!("W = {:.4}, ICC(2,k) = {:.4}", kendalls_w(&raw.values)?, icc(&t.values)?);
    for l in leave_one_out_agreement(&t.values)? {
        println!("  {}: plcc {:.3} srcc {:.3}", raw.annotators[l.annotator_index], l.plcc, l.srcc);
    }
    Ok(())
}
