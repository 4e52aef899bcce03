use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::Micros;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("tier boundaries must be strictly ascending, got {0:?}")]
    TierBoundaries([i32; 4]),
    #[error("a job has at least one task; task count 0 is malformed")]
    EmptyJob,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unknown column `{column}` in {table} header")]
    UnknownColumn { table: &'static str, column: String },
    #[error("{table} header is missing required column `{column}`")]
    MissingColumn { table: &'static str, column: String },
    #[error("{table} line {line}: {reason}")]
    Rejected {
        table: &'static str,
        line: usize,
        reason: String,
    },
    #[error("missing table file {0}")]
    MissingFile(PathBuf),
    #[error("all four tables are empty; no trace bounds can be derived")]
    EmptyBundle,
    #[error("degenerate trace bounds [{start}, {end}]")]
    DegenerateBounds { start: Micros, end: Micros },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("timestamp {0} is a sentinel")]
    Sentinel(Micros),
    #[error("timestamp {0} lies outside the trace horizon")]
    OutOfRange(Micros),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("could not read config {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    Invalid(String),
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("daily series lengths differ: usage {usage}, capacity {capacity}")]
    SeriesLengthMismatch { usage: usize, capacity: usize },
    #[error("window series lengths differ: usage {usage}, capacity {capacity}")]
    WindowMismatch { usage: usize, capacity: usize },
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("analysis `{analysis}` requires partitioning by {required}, plan has {planned}")]
    IncompatiblePartitionKey {
        analysis: &'static str,
        required: &'static str,
        planned: &'static str,
    },
    #[error("worker failed on partition {partition}: {message}")]
    WorkerFailed { partition: usize, message: String },
    #[error("invalid analysis job: {0}")]
    InvalidJob(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{count} usage records span a window boundary (strict mode)")]
    SpanningUsage { count: u64 },
    #[error("report digests differ across worker counts: {0:?}")]
    DigestMismatch(Vec<(usize, String)>),
}

/// Top-level error for the command layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
}

impl Error {
    /// Process exit status: 1 usage, 2 input/parse, 3 analysis.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Config(_) => 1,
            Error::Ingest(_) | Error::Io { .. } => 2,
            Error::Generator(GeneratorError::Invalid(_)) => 1,
            Error::Generator(_) => 3,
            Error::Engine(EngineError::IncompatiblePartitionKey { .. }) => 1,
            Error::Engine(EngineError::InvalidJob(_)) => 1,
            Error::Engine(_) => 3,
        }
    }
}
