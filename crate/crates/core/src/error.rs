use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{location}: malformed input: {message}")]
    Parse { location: String, message: String },

    /// A value violated a documented invariant; `field` names the offending input.
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },

    #[error("precision {precision} is not present in profile {profile}")]
    UnknownPrecision { precision: String, profile: String },

    #[error("unknown workload class {0:?}")]
    UnknownClass(String),

    #[error("case is missing {what} required by the {path} path")]
    MissingInput {
        what: &'static str,
        path: &'static str,
    },

    #[error("{0}")]
    EmptyInput(&'static str),

    #[error(
        "calibration refused: holdout MAE worsens from {before:.4}% to {after:.4}% \
         (pass the override flag to emit anyway)"
    )]
    CalibrationRefused { before: f64, after: f64 },

    /// An internal consistency check failed; this indicates a bug rather than bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl ModelError {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn is_internal(&self) -> bool {
        matches!(self, ModelError::Internal(_))
    }
}
