use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("filter diverged at step {step} (t = {t} s): {reason}")]
    Divergence { step: usize, t: f64, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("integration failed at t = {t} s: step size {h:e} s below minimum; {hint}")]
    Stiffness { t: f64, h: f64, hint: String },

    #[error("{path}: row {row}: {msg}")]
    Dataset { path: String, row: usize, msg: String },

    #[error("refusing to run: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for errors caused by the user's configuration or input files.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig(_)
                | Error::InvalidInput(_)
                | Error::Dataset { .. }
                | Error::Refused(_)
                | Error::Toml(_)
                | Error::Csv(_)
                | Error::Io(_)
        )
    }
}
