use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("sequencing error: report for round {got} delivered while expecting round {expected}")]
    Sequencing { expected: u64, got: u64 },

    #[error("exact search exceeds its budget ({0}); use the approximate oracle")]
    Size(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("maximum simultaneous task count is not tractable ({0}); set l_bar_override")]
    OverrideRequired(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(
        "horizon T = {horizon} must exceed M*N*B*C_u = {required} (M = {agents}, N = {tasks}, B = {budget}, C_u = {c_upper})"
    )]
    Horizon {
        horizon: u64,
        required: u64,
        agents: usize,
        tasks: usize,
        budget: u64,
        c_upper: u32,
    },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("toml parse error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("toml write error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn dim(expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user-supplied configuration rather than
    /// failures during a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. }
                | Error::Horizon { .. }
                | Error::Instance(_)
                | Error::Distribution(_)
                | Error::TomlDe(_)
                | Error::OverrideRequired(_)
                | Error::Capability(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
