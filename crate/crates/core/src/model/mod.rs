//! Encoder-decoder network over OD-pair graphs: a recurrent temporal
//! encoder, residual multi-graph convolution (RMGC) stacks and an optional
//! calendar embedding.

mod checkpoint;
pub mod layers;
mod network;
#[cfg(test)]
mod tests;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use layers::{glorot_bound, rmgc_forward, tile_and_concat, RmgcBlock};
pub use network::{embed_time, Batch, ForecastModel, ModelDims};

use serde::{Deserialize, Serialize};

use crate::features::FeatureError;
use crate::numerics::{Activation, NumericsError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Gru,
    Lstm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Width of each calendar feature's embedding layer.
    pub embed_width: usize,
    /// Width of each branch's dense layer.
    pub branch_width: usize,
    /// Hidden widths of the first two layers of the dense module.
    pub module_widths: [usize; 2],
    /// Output dimension `p` of the embedding.
    pub output_dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            embed_width: 5,
            branch_width: 8,
            module_widths: [32, 16],
            output_dim: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_temporal: usize,
    pub hidden_spatial: usize,
    pub encoder_blocks: usize,
    pub decoder_blocks: usize,
    pub activation: Activation,
    pub dropout: f64,
    pub cell: CellType,
    pub embedding: EmbeddingConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_temporal: 64,
            hidden_spatial: 64,
            encoder_blocks: 3,
            decoder_blocks: 3,
            activation: Activation::Relu,
            dropout: 0.7,
            cell: CellType::Gru,
            embedding: EmbeddingConfig::default(),
        }
    }
}

impl ModelConfig {
    /// Every problem found, as `(key, message)`.
    pub fn problems(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut positive = |key: &str, v: usize| {
            if v == 0 {
                out.push((key.to_string(), "must be at least 1".to_string()));
            }
        };
        positive("hidden_temporal", self.hidden_temporal);
        positive("hidden_spatial", self.hidden_spatial);
        positive("encoder_blocks", self.encoder_blocks);
        positive("decoder_blocks", self.decoder_blocks);
        positive("embedding.embed_width", self.embedding.embed_width);
        positive("embedding.branch_width", self.embedding.branch_width);
        positive("embedding.module_widths[0]", self.embedding.module_widths[0]);
        positive("embedding.module_widths[1]", self.embedding.module_widths[1]);
        if !(0.0..1.0).contains(&self.dropout) {
            out.push(("dropout".into(), format!("must lie in [0, 1), got {}", self.dropout)));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self.problems().first() {
            None => Ok(()),
            Some((k, m)) => Err(ModelError::Config(format!("{k}: {m}"))),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
