//! Likert ratings to probit reward targets.
//!
//! One annotator's scores [1, 2, 2, 5] give smoothed percentiles
//! 0.125 / 0.5 / 0.875. The second half aggregates a small ratings table.

use std::collections::BTreeSet;

use critic_kit::stats::{
    compute_reward_targets, probit, smoothed_percentile, AnnotatorEcdf, Dimension, LikertRecord,
};

fn main() -> anyhow::Result<()> {
    let e = AnnotatorEcdf::from_scores("ann-1", Dimension::Accuracy, &[1, 2, 2, 5])?;
    for x in [1u8, 2, 5] {
        let p = smoothed_percentile(&e, x)?;
        println!("score {x}: P' = {p:.3}  probit = {:+.4}", probit(p));
    }

    let mut records = Vec::new();
    let table: [(&str, &str, [u8; 3]); 6] = [
        ("c1", "alice", [5, 4, 4]),
        ("c2", "alice", [2, 3, 1]),
        ("c3", "alice", [4, 4, 5]),
        ("c1", "bob", [4, 5, 5]),
        ("c2", "bob", [1, 2, 2]),
        ("c3", "bob", [3, 3, 4]),
    ];
    for (critique, annotator, scores) in table {
        for d in Dimension::ALL {
            records.push(LikertRecord {
                critique_id: critique.into(),
                annotator_id: annotator.into(),
                dimension: d,
                score: scores[d.index()],
            });
        }
    }
    for t in compute_reward_targets(&records, &BTreeSet::new())? {
        println!("{} -> [{:+.3}, {:+.3}, {:+.3}]", t.critique_id, t.targets[0], t.targets[1], t.targets[2]);
    }
    Ok(())
}
