use serde::{Deserialize, Serialize};

use super::critique::CritiqueBody;

/// Edit category from the high-level / low-level task taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Add,
    Remove,
    Replace,
    Color,
    Texture,
    Style,
    Action,
    WeatherSeason,
    Expression,
    Background,
    Counting,
    Position,
    Size,
    Lighting,
    Identity,
    Outpainting,
    CropZoom,
    CompositeMultiEdit,
    Deblur,
    Dehaze,
    Denoise,
    Derain,
    Desnow,
    LowLightEnhancement,
    ShadowRemoval,
    SuperResolution,
}

impl TaskType {
    pub fn is_low_level(self) -> bool {
        matches!(
            self,
            TaskType::Deblur
                | TaskType::Dehaze
                | TaskType::Denoise
                | TaskType::Derain
                | TaskType::Desnow
                | TaskType::LowLightEnhancement
                | TaskType::ShadowRemoval
                | TaskType::SuperResolution
        )
    }
}

/// One `triplets.jsonl` row: a source image, its edited counterpart and the
/// instruction that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditTriplet {
    pub source_id: String,
    pub pair_id: String,
    pub source_image: String,
    pub edited_image: String,
    pub instruction: String,
    pub task_type: TaskType,
}

/// One `critiques.jsonl` row. `text` holds the canonical critique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueRecord {
    pub critique_id: String,
    pub pair_id: String,
    pub generator_id: String,
    pub text: String,
}

/// One `mos.jsonl` row: normalized human MOS as `[vq, ia, cp]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosRecord {
    pub pair_id: String,
    pub mos: [f64; 3],
}

impl MosRecord {
    pub fn validate(&self) -> Result<(), super::DatasetError> {
        for &v in &self.mos {
            if !(0.0..=1.0).contains(&v) {
                return Err(super::DatasetError::OutOfRange { what: "mos", value: v });
            }
        }
        Ok(())
    }
}

/// A parsed critique together with its identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct Critique {
    pub critique_id: String,
    pub pair_id: String,
    pub generator_id: String,
    pub body: CritiqueBody,
}

impl Critique {
    pub fn from_record(record: &CritiqueRecord) -> Result<Self, super::DatasetError> {
        Ok(Critique {
            critique_id: record.critique_id.clone(),
            pair_id: record.pair_id.clone(),
            generator_id: record.generator_id.clone(),
            body: super::parse_critique(&record.text)?,
        })
    }

    pub fn to_record(&self) -> CritiqueRecord {
        CritiqueRecord {
            critique_id: self.critique_id.clone(),
            pair_id: self.pair_id.clone(),
            generator_id: self.generator_id.clone(),
            text: super::emit_critique(&self.body),
        }
    }
}
