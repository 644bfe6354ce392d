use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("schema error in {path}: {detail}")]
    Schema { path: PathBuf, detail: String },

    #[error("time-grid error in {path}: {detail}")]
    TimeGrid { path: PathBuf, detail: String },

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStats(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },

    #[error("model `{0}` has no trainable parameters")]
    NoTraining(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("archive alignment error: {0}")]
    Alignment(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "E_SHAPE",
            Error::Contract(_) => "E_CONTRACT",
            Error::Schema { .. } => "E_SCHEMA",
            Error::TimeGrid { .. } => "E_TIME_GRID",
            Error::Metadata(_) => "E_METADATA",
            Error::Split(_) => "E_SPLIT",
            Error::DegenerateStats(_) => "E_DEGENERATE_STATS",
            Error::Parameter(_) => "E_PARAMETER",
            Error::UndefinedMetric(_) => "E_UNDEFINED_METRIC",
            Error::Divergence { .. } => "E_DIVERGENCE",
            Error::NoTraining(_) => "E_NO_TRAINING",
            Error::Config(_) => "E_CONFIG",
            Error::Alignment(_) => "E_ALIGNMENT",
            Error::Checkpoint(_) => "E_CHECKPOINT",
            Error::Io { .. } => "E_IO",
            Error::Csv(_) => "E_CSV",
            Error::Json(_) => "E_JSON",
        }
    }
}
