use std::path::PathBuf;

use crate::tensor::Shape;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("{op}: output size is not a positive integer ({detail})")]
    OutputSize { op: &'static str, detail: String },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),
    #[error("backward already ran on this graph; run the forward pass again")]
    BackwardTwice,
    #[error("{0} is not differentiable and cannot take a gradient-requiring input")]
    NotDifferentiable(&'static str),
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("architecture: {0}")]
    Architecture(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("image {}: {msg}", path.display())]
    Image { path: PathBuf, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("metric: {0}")]
    Metric(String),
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(u64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}
