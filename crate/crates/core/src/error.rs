use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape([usize; 4]),
    #[error("data length {got} does not match shape {shape:?} (expected {expected})")]
    DataLength {
        shape: [usize; 4],
        expected: usize,
        got: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("feature interval [{lo}, {hi}) is out of range for {dim} bins")]
    OutOfRange { lo: usize, hi: usize, dim: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot concatenate an empty list of tensors")]
    EmptyConcat,
    #[error("inconsistent model spec: {0}")]
    InconsistentSpec(String),
    #[error("invalid band layout: {0}")]
    InvalidLayout(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("unsupported wav file {path}: {field}")]
    UnsupportedWav { path: PathBuf, field: String },
    #[error("unsupported wav file {path}: {channels} channels (expected mono)")]
    UnsupportedChannels { path: PathBuf, channels: u16 },
    #[error("frame length {frame_len} exceeds signal length {n_samples}")]
    FrameTooLong { frame_len: usize, n_samples: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("empty pool: {0}")]
    EmptyPool(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    Checksum { stored: u64, computed: u64 },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("bad file format: {0}")]
    Format(String),
    #[error("checkpoint spec does not match the requested model: {0}")]
    SpecMismatch(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }
}
