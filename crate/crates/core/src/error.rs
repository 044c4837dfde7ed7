use thiserror::Error;

/// Errors raised by the measures, the simulator and the file loaders.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BiasError {
    /// An attribute or value set does not match its declared schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// A numeric or enumerated parameter is outside its domain.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// The supplied data violates a precondition (empty class, missing list, ...).
    #[error("input error: {0}")]
    Input(String),
    /// A user profile lacks an attribute the computation needs.
    #[error("profile error: {0}")]
    Profile(String),
    /// The measure is not defined for the supplied data.
    #[error("measure undefined: {0}")]
    MeasureUndefined(String),
    /// The measure needs data the audit mode does not provide (e.g. ground truth).
    #[error("mode error: {0}")]
    Mode(String),
    /// The exact solver refuses an instance above its size guard.
    #[error("complexity guard: {0}")]
    Complexity(String),
    /// Too few users for a resampling procedure.
    #[error("small sample: {0}")]
    SmallSample(String),
    /// A malformed record in an input file.
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    /// The audit configuration cannot be executed.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl BiasError {
    /// True for errors caused by configuration rather than by the data.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            BiasError::Parameter(_) | BiasError::Mode(_) | BiasError::Config(_)
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        BiasError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, BiasError>;
