use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate log-ratios: all angular coordinates are zero")]
    DegenerateLogRatios,

    #[error("degenerate column `{0}`: no spread after rescaling")]
    DegenerateColumn(String),

    #[error("zero median in column `{0}`")]
    ZeroMedian(String),

    #[error("column `{name}` not found; available columns: {}", available.join(", "))]
    MissingColumn { name: String, available: Vec<String> },

    #[error("no usable rows in {0}")]
    NoRows(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    File { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn file(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::File {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// Wraps an error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
