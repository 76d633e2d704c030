use std::path::PathBuf;

use thiserror::Error;

use crate::io::config::ConfigError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("cannot convert {from} to {to}: incompatible dimensions")]
    IncompatibleUnits { from: String, to: String },

    #[error("unknown unit `{0}`")]
    UnknownUnit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("zeeman lifetime table is empty")]
    EmptyTable,

    #[error("grid is not sorted ascending at index {index}")]
    UnsortedGrid { index: usize },

    #[error("grid is not uniform: sample {index} deviates from t_start + i*dt")]
    NonUniformGrid { index: usize },

    #[error("frequency resolution {resolution} Hz is coarser than tooth FWHM/10 = {limit} Hz")]
    ResolutionTooCoarse { resolution: f64, limit: f64 },

    #[error("aliasing: {0}")]
    Aliasing(String),

    #[error("channel bands overlap: channel {first} and channel {second}")]
    OverlappingChannels { first: usize, second: usize },

    #[error("parameters ({0}) are not identifiable: {1}")]
    Identifiability(&'static str, String),

    #[error("grid oracle budget exceeded: {evaluations} evaluations > {budget}")]
    GridBudget { evaluations: u128, budget: u128 },

    #[error("{} configuration error(s):\n{}", .0.len(), display_config_errors(.0))]
    Config(Vec<ConfigError>),

    #[error("{path}:{line}: {reason}")]
    Trace {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn display_config_errors(errors: &[ConfigError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}
