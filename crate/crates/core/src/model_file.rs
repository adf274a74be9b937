//! On-disk JSON format for a fitted reducer together with its normalizer.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::Normalizer;
use crate::error::{Error, Result};
use crate::reducer::Reducer;

pub const FORMAT_VERSION: u32 = 1;

/// Provenance of a fit. Only `created_at` varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub created_at: String,
    pub seed: u64,
    /// SHA-256 of the training data, see [`Dataset::fingerprint`](crate::dataio::Dataset::fingerprint).
    pub data_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub reducer: Reducer,
    pub normalizer: Normalizer,
    pub column_names: Vec<String>,
    pub metadata: Metadata,
}

impl ModelFile {
    pub fn new(reducer: Reducer, normalizer: Normalizer, column_names: Vec<String>, metadata: Metadata) -> Result<Self> {
        let m = reducer.input_dim();
        if normalizer.dim() != m || column_names.len() != m {
            return Err(Error::Config(format!(
                "model expects {m} columns but normalizer has {} and {} names were given",
                normalizer.dim(),
                column_names.len()
            )));
        }
        Ok(ModelFile {
            format_version: FORMAT_VERSION,
            reducer,
            normalizer,
            column_names,
            metadata,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Config(format!(
                    "model file format version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Config("model file has no format_version".into())),
        }
        let file: ModelFile = serde_json::from_value(value)?;
        ModelFile::new(file.reducer, file.normalizer, file.column_names, file.metadata)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
