//! Wire types of the reward-scoring endpoint.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::grpo::weighted_reward;

pub const ITEM_FIELDS: [&str; 4] = ["source_image", "edited_image", "instruction", "critic"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub source_image: String,
    pub edited_image: String,
    pub instruction: String,
    pub critic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl ScoreItem {
    /// Checks one raw request item, reporting every offending field.
    pub fn from_value(v: &Value) -> Result<ScoreItem, Vec<FieldError>> {
        let Some(obj) = v.as_object() else {
            return Err(vec![FieldError { field: String::new(), message: "item must be a JSON object".into() }]);
        };
        let mut errors = Vec::new();
        let mut vals: Vec<String> = Vec::with_capacity(4);
        for field in ITEM_FIELDS {
            let message = match obj.get(field) {
                None | Some(Value::Null) => "missing",
                Some(Value::String(s)) if s.trim().is_empty() => "empty",
                Some(Value::String(s)) => {
                    vals.push(s.clone());
                    continue;
                }
                Some(_) => "must be a string",
            };
            errors.push(FieldError { field: field.to_string(), message: message.to_string() });
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let mut it = vals.into_iter();
        let mut next = || it.next().expect("four fields collected");
        Ok(ScoreItem { source_image: next(), edited_image: next(), instruction: next(), critic: next() })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub items: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub logicality: f64,
    pub accuracy: f64,
    pub usefulness: f64,
    pub reward: f64,
}

impl ScoredItem {
    /// The reward is always derived here from the three dimensions.
    pub fn from_dims(dims: [f64; 3]) -> Self {
        ScoredItem { logicality: dims[0], accuracy: dims[1], usefulness: dims[2], reward: weighted_reward(dims) }
    }

    pub fn dims(&self) -> [f64; 3] {
        [self.logicality, self.accuracy, self.usefulness]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemError {
    pub error: String,
    pub fields: Vec<FieldError>,
}

/// One slot of the response, in request order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ItemResult {
    Scored(ScoredItem),
    Invalid(ItemError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub items: Vec<ItemResult>,
}

/// Body of whole-request failures (4xx/5xx without per-item results).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}
