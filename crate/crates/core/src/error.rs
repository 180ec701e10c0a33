use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A wavelength or temperature fell outside the validity range of a model.
    #[error("{quantity} {value} is beyond the {violated} of {limit} for {context}")]
    Range {
        quantity: &'static str,
        value: f64,
        /// Which bound was violated: `"minimum"` or `"maximum"`.
        violated: &'static str,
        limit: f64,
        context: String,
    },

    #[error("unknown material `{0}`")]
    UnknownMaterial(String),

    /// The requested physical process does not exist (e.g. signal bluer than pump).
    #[error("domain error: {0}")]
    Domain(String),

    /// A ratio or estimator is undefined for the given inputs.
    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status: 1 for bad input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Range { .. }
            | Error::UnknownMaterial(_)
            | Error::Domain(_)
            | Error::Validation(_)
            | Error::Json(_)
            | Error::Csv(_) => 1,
            Error::Undefined(_) | Error::Fit(_) | Error::Io { .. } => 2,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
