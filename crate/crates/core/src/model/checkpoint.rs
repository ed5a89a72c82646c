use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ForecastModel, ModelError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ForecastModel,
}

pub fn save_checkpoint(model: &ForecastModel, path: &Path) -> Result<(), ModelError> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        model: model.clone(),
    };
    let json = serde_json::to_string(&ck).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ForecastModel, ModelError> {
    let text = fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "version {} is not supported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    ck.model.check_layout()?;
    Ok(ck.model)
}
