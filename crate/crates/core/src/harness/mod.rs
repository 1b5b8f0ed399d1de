//! Run configuration, checkpoints and the end-to-end workflows behind the
//! `msgu` command line: training, inference, evaluation, ablation, gradient
//! scans and FLOPs accounting.

pub mod checkpoint;
pub mod config;
pub mod flops;
pub mod gradscan;
mod inference;
mod training;

use std::path::Path;

pub use checkpoint::Checkpoint;
pub use config::{DataConfig, OutputConfig, RunConfig, TrainConfig, SEED_ENV};
pub use flops::{flops, FlopsReport};
pub use inference::{ablate, ablate_dataset, infer, load_generator, AblationGrid};
pub use training::{run_training, train, PendingStep, TrainSummary, Trainer};

use crate::metrics::{evaluate_dataset, MetricReport};
use crate::Result;

/// Scores `outputs` against `targets` and writes `metrics.csv` into `outputs`.
pub fn eval(outputs: &Path, targets: &Path) -> Result<MetricReport> {
    let report = evaluate_dataset(outputs, targets)?;
    std::fs::write(outputs.join("metrics.csv"), report.to_csv())?;
    Ok(report)
}
