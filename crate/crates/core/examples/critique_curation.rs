//! Parsing and emitting structured critiques, then applying the curation and
//! resampling rules against human scores and MOS.

use critic_kit::dataset::{
    curate_cot, emit_critique, parse_critique, resample_trigger, CurationThresholds, RESAMPLE_THRESHOLD,
};

const TEXT: &str = "[Original Image Description]
A red barn under an overcast sky.
[Edited Image Description]
The same barn under a clear blue sky.
[Evaluation Rationale]
The sky replacement is clean; barn edges show slight haloing.
[Final Assessment]0.58, 0.36, 0.50";

fn main() -> anyhow::Result<()> {
    let body = parse_critique(TEXT)?;
    println!("scores {:?}", body.score_values());
    assert_eq!(emit_critique(&body), TEXT);

    let mos = [0.55, 0.62, 0.48];
    println!("resample dims: {:?}", resample_trigger(body.score_values(), mos, RESAMPLE_THRESHOLD)?);

    let d = curate_cot([0.8, 0.75, 0.9], body.score_values(), mos, CurationThresholds::default())?;
    println!("keep = {}", d.keep);
    println!("{}", serde_json::to_string_pretty(&d)?);

    match parse_critique(&TEXT.replace(", 0.50", "")) {
        Err(e) => println!("malformed: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
