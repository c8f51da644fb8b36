//! Versioned JSON persistence for fitted models.

use super::{ConditionalGaussian, ConditionalModel, KnnKde, ToyOracle};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

pub const MODEL_SCHEMA: &str = "mocp.model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelDocument {
    ConditionalGaussian(ConditionalGaussian),
    KnnKde(KnnKde),
    ToyOracle(ToyOracle),
}

impl ModelDocument {
    pub fn into_model(self) -> Arc<dyn ConditionalModel> {
        match self {
            ModelDocument::ConditionalGaussian(m) => Arc::new(m),
            ModelDocument::KnnKde(m) => Arc::new(m),
            ModelDocument::ToyOracle(m) => Arc::new(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub schema: String,
    pub model: ModelDocument,
}

impl SavedModel {
    pub fn new(model: ModelDocument) -> Self {
        Self { schema: MODEL_SCHEMA.to_string(), model }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let saved: SavedModel = serde_json::from_str(&text)?;
        if saved.schema != MODEL_SCHEMA {
            return Err(Error::InvalidConfig(format!(
                "unsupported model schema '{}', expected '{MODEL_SCHEMA}'",
                saved.schema
            )));
        }
        Ok(saved)
    }
}
