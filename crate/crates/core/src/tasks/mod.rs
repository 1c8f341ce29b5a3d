//! Synthetic span tagging: data, model wrapper, training and metrics.

mod dataset;
mod metrics;
mod model;
mod train;

pub use dataset::{generate_dataset, DatasetConfig, Example, SpanTaggingDataset, BEGIN, END, FIRST_FILLER, PAD};
pub use metrics::{extract_spans, score, EvalMetrics};
pub use model::{ModelConfig, TaggerModel, N_LABELS};
pub use train::{evaluate, train, MetricsRow, TrainConfig};
