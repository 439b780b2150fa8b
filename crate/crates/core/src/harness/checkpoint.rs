use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::flow_layers::ParamStore;
use crate::flow_model::{Architecture, FlowModel, Variant};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Self-describing JSON model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub variant: Option<Variant>,
    pub dim: usize,
    pub architecture: Architecture,
    pub tickers: Vec<String>,
    /// Maps raw returns to the space the model was trained in.
    pub standardizer: Standardizer,
    pub init_seed: u64,
    pub train_seed: u64,
    pub best_epoch: Option<usize>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(
        model: &FlowModel,
        tickers: Vec<String>,
        standardizer: Standardizer,
        init_seed: u64,
        train_seed: u64,
        best_epoch: Option<usize>,
    ) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            variant: model.variant(),
            dim: model.dim(),
            architecture: model.architecture().clone(),
            tickers,
            standardizer,
            init_seed,
            train_seed,
            best_epoch,
            params: model.store().clone(),
        }
    }

    pub fn model(&self) -> Result<FlowModel> {
        if self.standardizer.dim() != self.dim {
            return Err(Error::Checkpoint(format!(
                "standardizer has {} columns for a {}-dimensional model",
                self.standardizer.dim(),
                self.dim
            )));
        }
        FlowModel::from_parts(self.dim, self.variant, self.architecture.clone(), self.params.clone())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        match value.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "{}: format version {v} is not supported (expected {CHECKPOINT_FORMAT_VERSION})",
                    path.as_ref().display()
                )))
            }
            None => return Err(Error::Checkpoint(format!("{}: missing format_version", path.as_ref().display()))),
        }
        Ok(serde_json::from_value(value)?)
    }
}
