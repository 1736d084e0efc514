use std::path::PathBuf;

/// Coarse classification used by callers (the CLI maps these to exit codes).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad arguments or configuration supplied by the caller.
    Usage,
    /// Malformed, inconsistent, or unreadable data on disk.
    Data,
    /// Numerical failure (divergence, NaN loss).
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("integration diverged at step {step} (t = {t:.4} s): non-finite state")]
    IntegrationDiverged { step: usize, t: f64 },

    #[error("packet log not sorted by ts: record {index} (ts {ts}) precedes ts {prev_ts}")]
    UnsortedPackets { index: usize, ts: f64, prev_ts: f64 },

    #[error("series length {len} is not divisible by 2^{level}")]
    WaveletShape { len: usize, level: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("encode error: {0}")]
    Encode(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(
        "checkpoint payload truncated: expected {expected} bytes of parameters, found {actual}"
    )]
    CheckpointTruncated { expected: u64, actual: u64 },

    #[error("schema hash mismatch: {left} vs {right} (source and target must share one feature schema)")]
    SchemaHashMismatch { left: String, right: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training aborted at epoch {epoch}: loss is not finite ({loss})")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidConfig(_) => ErrorCategory::Usage,
            Error::IntegrationDiverged { .. } | Error::NonFiniteLoss { .. } => {
                ErrorCategory::Numeric
            }
            _ => ErrorCategory::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
