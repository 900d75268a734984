use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wkt syntax error at byte {offset}: {message}")]
    WktSyntax { offset: usize, message: String },

    #[error("unsupported geometry type `{0}`")]
    UnsupportedGeometry(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: duplicate geoid `{geoid}`")]
    DuplicateGeoid { path: PathBuf, geoid: String },

    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("empty training set for {0}")]
    EmptyTrainingSet(String),

    #[error("cannot build {folds} folds from {n} rows")]
    Folds { folds: usize, n: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unsupported model file version {0}")]
    ModelVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Data errors are caused by input content rather than by usage or
    /// internal bugs.
    pub fn is_data_error(&self) -> bool {
        !matches!(
            self,
            Error::MissingColumn { .. }
                | Error::Schema { .. }
                | Error::InvalidArgument(_)
                | Error::Invariant(_)
                | Error::Io(_)
        )
    }
}
