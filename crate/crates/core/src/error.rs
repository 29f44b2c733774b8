use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no sites in input")]
    NoSites,

    #[error("row {row}: column `{column}`: {message}")]
    MalformedRow {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown column `{0}` in header")]
    UnknownColumn(String),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("duplicate registry id `{0}`")]
    DuplicateSite(String),

    #[error("invalid objective spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite value at site `{site}`, objective `{objective}`")]
    NonFinite { site: String, objective: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("binomial coefficient C({m}, {s}) out of range (m must be <= 64)")]
    Overflow { m: usize, s: usize },

    #[error("rank {k} out of range 1..={max} for m={m}, s={s}")]
    RankOutOfRange {
        m: usize,
        s: usize,
        k: u64,
        max: u64,
    },

    #[error("resume accumulator is for length {found}, expected {expected}")]
    ResumeLengthMismatch { expected: usize, found: usize },

    #[error("resume accumulator does not match the matrix: {0}")]
    ResumeMismatch(String),

    #[error("accumulator for length {s} is incomplete ({done}/{total} combinations)")]
    IncompleteAccumulator { s: usize, done: u64, total: u64 },

    #[error("sweep incomplete, lengths without results: {missing:?}")]
    IncompleteSweep { missing: Vec<usize> },

    #[error("worker panicked on length {s}, combinations {k_start}..={k_end}: {message}")]
    WorkerPanic {
        s: usize,
        k_start: u64,
        k_end: u64,
        message: String,
    },

    #[error("checkpoint {path}: {message}")]
    CheckpointCorrupt { path: PathBuf, message: String },

    #[error("checkpoint {path} was written for a different dataset")]
    FingerprintMismatch { path: PathBuf },

    #[error("duplicate coordinates ({lon}, {lat}) with conflicting objective rows")]
    ConflictingDuplicate { lon: f64, lat: f64 },

    #[error("unknown state FIPS code {0}")]
    UnknownState(u32),

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
