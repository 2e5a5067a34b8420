use std::path::PathBuf;

use thiserror::Error;

use crate::network::{Entrance, Movement};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("illegal movement: {movement} from {entrance}")]
    IllegalMovement { entrance: Entrance, movement: Movement },

    #[error("unknown lane `{0}`")]
    UnknownLane(String),

    #[error("invalid step: {0}")]
    InvalidStep(String),

    #[error("invalid scenario code `{0}`: expected three digits, each 1, 2 or 3")]
    InvalidCode(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("run {design}/{code}/seed {seed} failed: {source}")]
    Run {
        design: String,
        code: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a failing run.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::InvalidGeometry(_)
            | Error::IllegalMovement { .. }
            | Error::UnknownLane(_)
            | Error::InvalidCode(_)
            | Error::InvalidConfig(_)
            | Error::Json(_) => true,
            Error::Run { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
