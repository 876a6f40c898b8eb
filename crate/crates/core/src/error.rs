use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset has {0} rows, at least {min} required", min = crate::dataset::MIN_ROWS)]
    TooFewRows(usize),
    #[error("cannot parse expression at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("operation `{0}` is not part of the operation set")]
    OperationNotInSet(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("run aborted: {0}")]
    Aborted(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
