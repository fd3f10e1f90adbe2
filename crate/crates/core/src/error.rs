use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedFile(String),
    #[error("timestamp gap at row {row}: expected {expected}, found {found}")]
    GapDetected {
        row: usize,
        expected: String,
        found: String,
    },
    #[error("panel has no data")]
    EmptyPanel,
    #[error("missing or non-numeric value at row {row}, column {column}")]
    MissingValue { row: usize, column: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("series is degenerate: {0}")]
    DegenerateSeries(String),
    #[error("series too short: need {needed} samples, have {actual}")]
    SeriesTooShort { needed: usize, actual: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("every series in the panel is degenerate ({0} skipped)")]
    AllSeriesDegenerate(usize),
    #[error("period {period} h maps to bin {bin}, outside 1..={max_bin}")]
    PeriodOutOfRange {
        period: f64,
        bin: i64,
        max_bin: usize,
    },
    #[error("window of {window} samples is too small (minimum {minimum})")]
    WindowTooSmall { window: usize, minimum: usize },
    #[error("index out of range: {0}")]
    OutOfRange(String),
    #[error("insufficient data for fit: {0}")]
    InsufficientData(String),
    #[error("circulant embedding failed: negative eigenvalue {eigenvalue:e} at embedding size {size}")]
    EmbeddingFailure { size: usize, eigenvalue: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input or parameters rather than by a
    /// failure during computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::MalformedFile(_)
                | Error::GapDetected { .. }
                | Error::EmptyPanel
                | Error::MissingValue { .. }
                | Error::InvalidConfig(_)
                | Error::SeriesTooShort { .. }
                | Error::PeriodOutOfRange { .. }
                | Error::WindowTooSmall { .. }
                | Error::OutOfRange(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
