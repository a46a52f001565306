//! JSON checkpoints: a small header followed by the flat parameter vector.
//! Floats are written with shortest round-trip formatting, so reloading is
//! bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DualHeadModel, HeadVariant, ModelError, ToyBackboneConfig};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    config: ToyBackboneConfig,
    variant: HeadVariant,
    num_params: usize,
    params: Vec<f64>,
}

pub fn to_json(model: &DualHeadModel) -> String {
    let ck = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: model.config,
        variant: model.variant,
        num_params: model.params.len(),
        params: model.params.clone(),
    };
    serde_json::to_string(&ck).expect("checkpoint serializes")
}

pub fn from_json(text: &str) -> Result<DualHeadModel, ModelError> {
    let ck: Checkpoint = serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported checkpoint version {}", ck.format_version)));
    }
    if ck.num_params != ck.params.len() {
        return Err(ModelError::Checkpoint(format!(
            "header declares {} parameters, body has {}",
            ck.num_params,
            ck.params.len()
        )));
    }
    DualHeadModel::from_params(ck.config, ck.variant, ck.params)
}

pub fn save(model: &DualHeadModel, path: &Path) -> Result<(), ModelError> {
    fs::write(path, to_json(model)).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<DualHeadModel, ModelError> {
    let text = fs::read_to_string(path).map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
    from_json(&text)
}
