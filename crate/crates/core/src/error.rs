use thiserror::Error;

/// Errors raised across the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("row {row} has zero norm")]
    DegenerateRow { row: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix of order {order} exceeds the {limit}x{limit} limit")]
    SizeLimit { order: usize, limit: usize },

    #[error("index {index} out of range for {bound} modes")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("repeated mode index {0}")]
    RepeatedIndex(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("distribution has no probability mass on the collision-free subspace")]
    DegenerateDistribution,

    #[error("distribution is empty")]
    EmptyDistribution,

    #[error("event log is empty")]
    EmptyLog,

    #[error("no combination reached {n_o} occurrences")]
    EmptyEstimate { n_o: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("stream integrity error at line {line}: tag {tag} precedes {previous}")]
    Integrity { line: usize, tag: u64, previous: u64 },

    #[error("delay calibration failed for channel {channel}: no coincidences in scan range")]
    CalibrationFailed { channel: u32 },

    #[error("unknown channel {0}")]
    UnknownChannel(u32),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("required efficiency {eta} exceeds 1")]
    UnattainableEfficiency { eta: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
