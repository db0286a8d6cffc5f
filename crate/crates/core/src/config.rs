//! JSON configuration documents holding a model and/or an instrument.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instruments::Instrument;
use crate::models::ModelConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument: Option<Instrument>,
}

impl ConfigDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("document", e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    pub fn model(&self) -> Result<&ModelConfig> {
        self.model.as_ref().ok_or_else(|| Error::config("model", "missing"))
    }

    pub fn instrument(&self) -> Result<&Instrument> {
        self.instrument.as_ref().ok_or_else(|| Error::config("instrument", "missing"))
    }
}
