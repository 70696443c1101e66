use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layer, NetworkParams, NetworkSpec, Target, TrainConfig};
use crate::data::Encoder;
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "predsens-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Floats are written in shortest round-trip form, which never needs more
/// than 17 significant digits and parses back to the identical `f64`.
const DECIMAL_DIGITS: u32 = 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub target: Target,
    pub config: TrainConfig,
    pub train_rows: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    /// SHA-256 of the encoded training data.
    pub data_digest: String,
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub decimal_digits: u32,
    pub spec: NetworkSpec,
    pub layer_dims: Vec<[usize; 2]>,
    pub layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingMetadata>,
    /// Frozen feature encoding (levels and standardization statistics) used
    /// to turn raw rows into model inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<Encoder>,
}

impl ModelFile {
    pub fn new(params: &NetworkParams) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            decimal_digits: DECIMAL_DIGITS,
            spec: params.spec.clone(),
            layer_dims: params.layers.iter().map(|l| [l.rows, l.cols]).collect(),
            layers: params.layers.clone(),
            training: None,
            encoder: None,
        }
    }

    pub fn with_training(mut self, training: TrainingMetadata) -> Self {
        self.training = Some(training);
        self
    }

    pub fn with_encoder(mut self, encoder: Encoder) -> Self {
        self.encoder = Some(encoder);
        self
    }

    pub fn params(&self) -> Result<NetworkParams> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Config(format!(
                "not a model file (format {:?})",
                self.format
            )));
        }
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                self.version
            )));
        }
        let dims: Vec<[usize; 2]> = self.layers.iter().map(|l| [l.rows, l.cols]).collect();
        if dims != self.layer_dims {
            return Err(Error::Config(
                "layer_dims header disagrees with layer arrays".into(),
            ));
        }
        let params = NetworkParams {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
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
