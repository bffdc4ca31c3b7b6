//! Dataset ingestion, splitting, target standardization, the Adam /
//! one-cycle training loop, evaluation and prediction.

mod data;
mod eval;
mod fit;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hiergraph::HierGraphError;
use crate::model::{ModelConfig, ModelError};
use crate::tensor::TensorError;

pub use data::{load_csv, parse_split_file, random_split, split_dataset, Dataset, Reject, Split, SplitSpec, Standardizer};
pub use eval::{evaluate, predict, predict_graphs, EvalReport, Prediction, TrainedModel};
pub use fit::{train, EpochMetrics, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("{0}")]
    Io(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("dataset has no usable records")]
    EmptyDataset,
    #[error("{0}")]
    Data(String),
    #[error("split index {index} out of range for {len} records")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("record {index} is listed in both {first} and {second}")]
    OverlappingSplits {
        index: usize,
        first: &'static str,
        second: &'static str,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] HierGraphError),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

/// Element type used for training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    pub fn from_name(s: &str) -> Option<Precision> {
        match s {
            "f32" => Some(Precision::F32),
            "f64" => Some(Precision::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Ring/connection widths and target count are filled in from the data.
    pub model: ModelConfig,
    pub split: SplitSpec,
    pub standardize_targets: bool,
}

impl TrainConfig {
    /// 100 epochs, batch 32, max learning rate 1e-3, desk-size model.
    pub fn desk(n_targets: usize) -> TrainConfig {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            max_lr: 1e-3,
            seed: 0,
            precision: Precision::F32,
            model: ModelConfig::desk(n_targets),
            split: SplitSpec::default(),
            standardize_targets: true,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(self.max_lr > 0.0 && self.max_lr < 1.0) {
            return Err(TrainError::InvalidConfig(format!("max_lr {} must lie in (0, 1)", self.max_lr)));
        }
        self.model.validate()?;
        Ok(())
    }
}

/// Learning rates swept by `--sweep`.
pub const MAX_LR_GRID: [f64; 4] = [1e-3, 5e-4, 1e-4, 5e-5];
