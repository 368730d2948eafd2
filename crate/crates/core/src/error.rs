use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sample is empty")]
    EmptySample,

    #[error("sample has zero variance; the test statistic is undefined")]
    ZeroVariance,

    #[error("sample size {size} is outside the supported range {min}..={max}")]
    UnsupportedSampleSize { size: usize, min: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mismatched input: {0}")]
    MismatchedInput(String),

    #[error("no benchmark left to aggregate")]
    NothingToAggregate,

    #[error("invalid timing: {0}")]
    InvalidTiming(String),

    #[error(
        "proportion interval refused: {accelerated} accelerated benchmarks, at least {required} needed"
    )]
    GuardViolated { accelerated: u64, required: u64 },

    #[error("failed to launch {program}: {source}")]
    LaunchFailed {
        program: String,
        #[source]
        source: std::io::Error,
    },

    #[error("benchmark failed at run {run} with {status}")]
    BenchmarkFailed { run: usize, status: String },

    #[error("run {run} exceeded the timeout of {timeout_secs} s")]
    RunTimedOut { run: usize, timeout_secs: f64 },

    #[error("another plan is running on this host (lock {}); pass force to override", .lock.display())]
    HostBusy { lock: PathBuf },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("refusing to overwrite existing file {}", .0.display())]
    AlreadyExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
