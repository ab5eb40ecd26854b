//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by simulator operations.
#[derive(Error, Debug)]
pub enum Error {
    /// Two parameter vectors (or a vector and a network) disagree on layout.
    #[error("parameter layout mismatch: expected {expected}, found {found}")]
    LayoutMismatch { expected: String, found: String },

    /// A flat value buffer does not match the layout it claims to follow.
    #[error("parameter length mismatch: layout requires {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    /// Feature width does not match the network input dimension.
    #[error("feature dimension mismatch: network expects {expected}, batch has {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// A class label is outside `[0, classes)`.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    /// Two predictions disagree on shape.
    #[error("prediction shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    /// An operation that needs data received none.
    #[error("{what} must not be empty")]
    Empty { what: &'static str },

    /// A probability row does not form a distribution.
    #[error("invalid probability row {row}: {reason}")]
    InvalidDistribution { row: usize, reason: String },

    /// Invalid network architecture.
    #[error("invalid network spec: {0}")]
    InvalidNetwork(String),

    /// Shard arithmetic cannot be satisfied.
    #[error("partition spec invalid: clients*classes_per_client = {product} is not divisible by {classes} classes")]
    IndivisibleShards { product: usize, classes: usize },

    /// A class has too few examples for the requested shard count.
    #[error("class {class} has {have} examples but {need} shards are required")]
    InsufficientClassExamples { class: usize, have: usize, need: usize },

    /// Invalid partition parameters.
    #[error("invalid partition spec: {0}")]
    InvalidPartition(String),

    /// Malformed CSV input, reported with a 1-based row number.
    #[error("csv row {row}: {reason}")]
    CsvFormat { row: usize, reason: String },

    /// Malformed checkpoint file.
    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),

    /// Invalid hyperparameter combination.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A hidden-layer index beyond the network depth.
    #[error("layer index {index} out of range: network has {hidden} hidden layers")]
    LayerOutOfRange { index: usize, hidden: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
