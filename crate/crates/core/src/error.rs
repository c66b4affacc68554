use thiserror::Error;

/// Errors produced by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {format} file at byte offset {offset}: {detail}")]
    Malformed {
        format: &'static str,
        offset: u64,
        detail: String,
    },

    #[error("unsupported NIfTI datatype code {code} (supported: int16=4, float32=16, float64=64)")]
    UnsupportedDatatype { code: i16 },

    #[error("payload size mismatch at byte offset {offset}: header implies {expected} bytes, found {found}")]
    SizeMismatch {
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no voxel survives masking and thresholding")]
    EmptyResult,

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("curve fit did not converge after {iterations} iterations (best weighted rmse {best_rmse})")]
    FitDidNotConverge { iterations: usize, best_rmse: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
