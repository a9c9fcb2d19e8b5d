use thiserror::Error;

/// Errors surfaced by the simulator, learners, and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A config or curriculum file could not be parsed.
    #[error("parse error in {source_name}: {message}")]
    Parse { source_name: String, message: String },

    /// A caller broke an operation's precondition (e.g. a masked action).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite input to a network.
    #[error("invalid input: {0}")]
    Input(String),

    /// Training produced a NaN/inf loss or gradient.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A log file is missing required columns.
    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than by a run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. } | Error::Schema(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
