use std::path::PathBuf;

/// Errors returned by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two arrays that must agree in shape did not.
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        /// Where the mismatch was detected.
        context: String,
        /// The shape that was required.
        expected: Vec<usize>,
        /// The shape that was supplied.
        actual: Vec<usize>,
    },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A constructor or operation received an argument outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough data to form the requested windows or forecasts.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged {
        /// 1-based epoch in which the failure happened.
        epoch: usize,
        /// What went non-finite.
        detail: String,
    },

    /// A configuration document was malformed or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Parsing a CSV input failed.
    #[error("csv error in {path}: {message}")]
    Csv {
        /// Offending file.
        path: PathBuf,
        /// Description including the row, where known.
        message: String,
    },

    /// A checkpoint file could not be decoded.
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        /// File being read or written.
        path: PathBuf,
        /// The OS error.
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
