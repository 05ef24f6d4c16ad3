//! Cost accounting and throughput measurement.

mod bench;
mod cost;

use thiserror::Error;

use crate::model::ModelError;
use crate::tensor::TensorError;

pub use bench::{bench, paired_bench, BenchConfig, BenchReport, PairedReport};
pub use cost::{cost_report, flops, param_count, resnet50_reference, CostReport, CostRow};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
