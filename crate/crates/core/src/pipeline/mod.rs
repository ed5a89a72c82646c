//! Sample assembly, training, metrics, weather scenarios and reports.

mod data;
mod experiment;
mod metrics;
mod report;
mod scenario;
mod train;

pub use data::{build_samples, standardize_samples, Context, Sample, SplitSpec};
pub use experiment::{evaluate_variant, fit_variant, ExperimentData, TrainedVariant};
pub use metrics::{mape, mse};
pub use report::{read_predictions, write_predictions, MetricsReport, MetricsRow, PredictionRecord, MAPE_NOTE};
pub use scenario::{apply_scenario, default_scenarios, Predicate, ScenarioFilter, ScenarioStats};
pub use train::{dataset_mse, predict_samples, train, TrainConfig};

use chrono::NaiveDateTime;

use crate::features::FeatureError;
use crate::graphs::GraphError;
use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("{0}")]
    Empty(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("length mismatch: {0} predictions vs {1} actuals")]
    LengthMismatch(usize, usize),
    #[error("model was built for {expected}, features are {got}")]
    VariantMismatch { expected: String, got: String },
    #[error("no feature row for {ts}: {reason}")]
    MissingSample { ts: NaiveDateTime, reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
