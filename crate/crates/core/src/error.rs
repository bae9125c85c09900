use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image file: {0}")]
    CorruptImage(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("decolorization level {0} is outside 0..=5")]
    LevelOutOfRange(u32),

    #[error("image {index} is {width}x{height}, smaller than a {side}x{side} patch")]
    ImageTooSmall {
        index: usize,
        width: usize,
        height: usize,
        side: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("training diverged at epoch {epoch}: cost is {cost}")]
    Diverged { epoch: usize, cost: f64 },

    #[error("kurtosis undefined for constant filter {0}")]
    ConstantFilter(usize),

    #[error("kurtosis undefined for a constant vector")]
    UndefinedKurtosis,

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("empty filter subset")]
    EmptySubset,

    #[error("unsupported format version: {0}")]
    Version(String),

    #[error("shape error in block `{block}`: expected {expected} values, found {found}")]
    Shape {
        block: String,
        expected: usize,
        found: usize,
    },

    #[error("malformed file: {0}")]
    Malformed(String),
}
