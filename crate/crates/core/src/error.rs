use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse channel file: {0}")]
    Parse(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{matrix} row {row} sums to {sum} (tolerance {tol})")]
    RowSum {
        matrix: &'static str,
        row: usize,
        sum: f64,
        tol: f64,
    },

    #[error("{matrix} row {row} has invalid entry {value} at column {col}")]
    InvalidEntry {
        matrix: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("not a probability distribution: {0}")]
    NotDistribution(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("mixture weight undefined: rho1 + rho2 = 0")]
    DegenerateMixture,

    #[error("invalid phase plan: {0}")]
    InvalidPlan(String),

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("enumeration cap exceeded: {required} output sequences x codeword pairs > cap {cap}")]
    EnumerationCap { required: u128, cap: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
