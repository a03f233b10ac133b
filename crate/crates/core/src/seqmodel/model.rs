use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ModelParameters;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::goalvec::GoalEmbedder;

pub const FORMAT_VERSION: u32 = 1;

/// A trained recommender as stored on disk.
///
/// The file is JSON with a fixed key order and shortest round-trip float
/// formatting, so saving a loaded model reproduces the original bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format_version: u32,
    pub params: ModelParameters,
    pub goal_embedder: GoalEmbedder,
    pub train_config: TrainConfig,
    /// SHA-256 of the canonical repository document the model was trained on.
    pub corpus_fingerprint: String,
}

impl Model {
    pub fn new(
        params: ModelParameters,
        goal_embedder: GoalEmbedder,
        train_config: TrainConfig,
        corpus_fingerprint: String,
    ) -> Result<Self> {
        let model = Self {
            format_version: FORMAT_VERSION,
            params,
            goal_embedder,
            train_config,
            corpus_fingerprint,
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(self.format_version));
        }
        let p = &self.params;
        let (d, n) = (p.dim, p.num_services());
        let shapes_ok = p.service_embeddings.dim() == (d, n)
            && p.output_weights.dim() == (n, d)
            && p.input_weights
                .as_array()
                .into_iter()
                .chain(p.recurrent_weights.as_array())
                .chain([&p.goal_weights, &p.transform_weights])
                .all(|m| m.dim() == (d, d))
            && p.gate_biases
                .as_array()
                .into_iter()
                .chain([&p.goal_bias, &p.transform_bias, &p.attention])
                .all(|v| v.len() == d);
        if !shapes_ok {
            return Err(Error::Malformed("parameter shapes disagree with the declared dimension".into()));
        }
        if self.goal_embedder.dim != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.goal_embedder.dim,
            });
        }
        if !p.is_finite() {
            return Err(Error::Malformed("model contains non-finite parameters".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the serialized model.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("model serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let version: VersionProbe = serde_json::from_str(text)?;
        if version.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(version.format_version));
        }
        let mut model: Model = serde_json::from_str(text)?;
        model.goal_embedder.finish_load();
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}
