use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector shapes are mutually inconsistent.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A problem or configuration value violates a required invariant.
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("riccati: {0}")]
    Riccati(String),

    #[error("lq: {0}")]
    Lq(String),

    #[error("lq: reduced-gradient solver did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },

    #[error("turnpike: {0}")]
    Turnpike(String),

    #[error("rhc: {0}")]
    Rhc(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}
