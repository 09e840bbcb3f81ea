use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HyperParams, ModelError, ParamGroup, Parameters};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "relnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// JSON container for hyperparameters, vocabulary, and every parameter array.
/// Floats are written with shortest round-trip formatting, so save/load is
/// bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub task: Option<u8>,
    pub hyper: HyperParams,
    #[serde(default)]
    pub vocab: Vec<String>,
    pub params: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new(
        hyper: &HyperParams,
        params: &Parameters,
        vocab: &[String],
        task: Option<u8>,
    ) -> Self {
        let params = ParamGroup::ALL
            .iter()
            .map(|&g| NamedTensor {
                name: g.name().to_string(),
                shape: params[g].shape().to_vec(),
                values: params[g].data().to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            task,
            hyper: hyper.clone(),
            vocab: vocab.to_vec(),
            params,
        }
    }

    /// Rebuilds [`Parameters`], checking names and declared shapes.
    pub fn parameters(&self) -> Result<Parameters, ModelError> {
        self.hyper.validate()?;
        let mut slots: Vec<Option<Tensor>> = vec![None; ParamGroup::ALL.len()];
        for nt in &self.params {
            let g = ParamGroup::from_name(&nt.name).ok_or_else(|| {
                ModelError::Checkpoint(format!("unknown parameter `{}`", nt.name))
            })?;
            let t = Tensor::new(nt.shape.clone(), nt.values.clone())
                .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", nt.name)))?;
            if slots[g.index()].replace(t).is_some() {
                return Err(ModelError::Checkpoint(format!(
                    "duplicate parameter `{}`",
                    nt.name
                )));
            }
        }
        let tensors = slots
            .into_iter()
            .zip(ParamGroup::ALL)
            .map(|(t, g)| {
                t.ok_or_else(|| ModelError::Checkpoint(format!("missing parameter `{}`", g.name())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Parameters::from_tensors(&self.hyper, tensors)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unexpected format `{}`",
                ckpt.format
            )));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_json()).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}
