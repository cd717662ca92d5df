use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("intensity {0} outside [0, 1]; pixel data must be normalized")]
    Intensity(f32),

    #[error("target class {target} out of range for {classes} output neurons")]
    Target { target: usize, classes: usize },

    #[error("layer {0} has no forward record; run the forward pass first")]
    MissingHistory(usize),

    #[error("non-finite weight in layer {layer} after update (sample {sample})")]
    NonFinite { layer: usize, sample: usize },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while reading IDX containers.
#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic number {found:#010x} (expected {expected:#010x})")]
    Magic { expected: u32, found: u32 },

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unexpected image dimensions {rows}x{cols} (expected 28x28)")]
    Dimensions { rows: usize, cols: usize },

    #[error("label {label} at index {index} is not a class in 0..=9")]
    Label { index: usize, label: u8 },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    Magic,

    #[error("unsupported checkpoint version {found} (this build reads version {supported})")]
    Version { found: u8, supported: u8 },

    #[error("corrupt checkpoint: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("corrupt checkpoint: {0}")]
    Invalid(String),
}
