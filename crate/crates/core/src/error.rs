use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated payload: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },

    #[error("sample count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("filter produced an empty dataset")]
    EmptyResult,

    #[error("sample {0} has no delta_x residual")]
    MissingDelta(usize),

    #[error("point is on neither sphere (norm {0})")]
    NotOnSphere(f64),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("accuracy never drops to 50% on the epsilon grid; extend the grid")]
    NoCrossing,

    #[error("attack never flipped the prediction up to epsilon {0}")]
    AttackExhausted(f64),

    #[error("pair out of theorem scope: {0}")]
    OutOfScope(String),

    #[error("zero variance in correlation input")]
    ZeroVariance,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config not found: {}", .0.display())]
    ConfigNotFound(PathBuf),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
