use thiserror::Error;

/// Errors raised across the toolkit.
///
/// `Config` covers anything the caller can fix by editing inputs; the CLI
/// maps it to exit code 2. Everything else is a runtime failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        state: Vec<f64>,
    },

    #[error("rate for cluster {cluster} is undefined: {reason}")]
    UndefinedRate { cluster: usize, reason: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors the user caused through configuration or input data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Json(_) | Error::UndefinedRate { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
