use thiserror::Error;

use crate::solvers::SolveStats;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("kernel is singular on the diagonal (x = y = {0})")]
    Singular(f64),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver error in {context}: {message}")]
    Solver {
        context: String,
        message: String,
        stats: Option<Box<SolveStats>>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn solver(context: &str, message: impl Into<String>, stats: Option<SolveStats>) -> Self {
        Error::Solver {
            context: context.to_string(),
            message: message.into(),
            stats: stats.map(Box::new),
        }
    }
}
