use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{malformed} of {total} lines malformed ({pct:.1}%), above the --max-malformed-pct threshold of {threshold}%")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        pct: f64,
        threshold: f64,
    },

    #[error("commit {commit_id}: conflicting renames of `{path}`")]
    ConflictingRename { commit_id: String, path: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("alpha {alpha} is not below 1/rho = {limit} (rho estimate {rho}); use a smaller alpha")]
    AlphaTooLarge { alpha: f64, rho: f64, limit: f64 },

    #[error("{method} did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("value at index {index} is not positive: {value}")]
    NonPositive { index: usize, value: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown column `{column}`; valid columns: {}", valid.join(", "))]
    UnknownColumn { column: String, valid: Vec<String> },

    #[error("unknown commit ids: {}", .0.join(", "))]
    UnknownCommits(Vec<String>),

    #[error("missing {artifact}; run `decaymap {command}` first")]
    MissingArtifact { artifact: String, command: String },

    #[error("{artifact} is stale: {reason}; rerun `decaymap {command}` or pass --force")]
    Stale {
        artifact: String,
        reason: String,
        command: String,
    },

    #[error("workspace {0} is locked by another command (remove the .lock file if none is running)")]
    Locked(PathBuf),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
