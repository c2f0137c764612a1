use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("backward requires a traced scalar loss: {0}")]
    Backward(String),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("malformed {format} input: {detail}")]
    Format { format: &'static str, detail: String },

    #[error("class {class} is the majority class and has no generator unit")]
    MajorityClass { class: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("all classes are balanced: nothing to oversample")]
    NothingToOversample,

    #[error("training diverged: non-finite {network} loss at epoch {epoch}, step {step}")]
    Diverged {
        network: &'static str,
        epoch: usize,
        step: usize,
    },

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Shape {
        op,
        detail: detail.into(),
    })
}
