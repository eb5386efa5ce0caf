//! CPU-utilization forecasting: min-max scaling, sliding-window dataset
//! construction, a stacked LSTM regressor trained from scratch with
//! backpropagation through time, and MAE/MAPE/R² evaluation.

mod checkpoint;
mod lstm;
mod metrics;
mod norm;
mod train;
mod window;

pub use checkpoint::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use lstm::{param_count, ForecastModel, LstmLayerParams, ModelConfig, GATE_ORDER};
pub use metrics::{evaluate, persistence_metrics, EvalMetrics, MetricScale, FULL_TRACE_REFERENCE};
pub use norm::{denormalize, minmax_normalize, normalize_with, NormParams};
pub use train::{batch_gradients, train, Gradients, Optimizer, TrainParams};
pub use window::{chrono_split, make_windows, WindowDataset};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("degenerate value range: min equals max")]
    DegenerateRange,
    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("split would leave an empty side (samples: {samples}, test: {test})")]
    EmptySplit { samples: usize, test: usize },
    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite training loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("all evaluation targets are near zero; MAPE undefined")]
    AllTargetsNearZero,
    #[error("evaluation set is empty")]
    EmptyDataset,
    #[error("invalid model configuration: {0}")]
    BadModelConfig(String),
    #[error("cannot load model: {reason}")]
    ModelLoad { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
