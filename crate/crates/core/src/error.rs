use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("manifest inconsistency at row {row}: {message}")]
    Manifest { row: usize, message: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("SNR undefined: noise peak equals noise mean ({0})")]
    UndefinedSnr(f64),

    #[error("extraction failed: {0}")]
    Extraction(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("likelihood domain error: {0}")]
    Likelihood(String),

    #[error("NIM fit failed: {0}")]
    Fit(String),

    #[error("a90 not bracketed: POD ranges over [{lo_pod}, {hi_pod}] on [{lo}, {hi}]")]
    NoA90 { lo: f64, hi: f64, lo_pod: f64, hi_pod: f64 },

    #[error("signal placement error: {0}")]
    Placement(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate test input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
