//! Source-level splitting, then the exposure-capped sampler on a
//! 100 source x 9 pair x 3 critique manifest until every critique is seen.

use critic_kit::dataset::{
    coverage_report, split_dataset, EditTriplet, SamplerCaps, SamplingManifest, Split, SplitRatios,
    StratifiedSampler, TaskType,
};

fn main() -> anyhow::Result<()> {
    let triplets: Vec<EditTriplet> = (0..100)
        .flat_map(|s| {
            (0..9).map(move |p| EditTriplet {
                source_id: format!("src{s:03}"),
                pair_id: format!("src{s:03}-p{p}"),
                source_image: format!("images/src{s:03}.png"),
                edited_image: format!("images/src{s:03}-p{p}.png"),
                instruction: "make it look like winter".into(),
                task_type: TaskType::Replace,
            })
        })
        .collect();
    let split = split_dataset(&triplets, SplitRatios::default(), 42)?;
    for s in [Split::Train, Split::Val, Split::Test] {
        println!("{:>5}: {} pairs", s.name(), split.triplets(&triplets, s).len());
    }

    let manifest = SamplingManifest::from_entries(
        triplets.iter().flat_map(|t| (0..3).map(move |c| (t.source_id.clone(), t.pair_id.clone(), format!("{}-c{c}", t.pair_id)))),
    );
    let mut sampler = StratifiedSampler::new(manifest.clone(), SamplerCaps::default(), 42);
    let mut epochs = Vec::new();
    loop {
        epochs.push(sampler.next_epoch());
        let report = coverage_report(&epochs, &manifest);
        let last = epochs.last().expect("just pushed");
        println!("epoch {}: {} critiques, coverage {:.3}", last.epoch, last.entries.len(), report.final_fraction);
        if report.first_full_epoch.is_some() {
            break;
        }
    }
    Ok(())
}
