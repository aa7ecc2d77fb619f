//! Error type shared by every module.

use thiserror::Error;

/// Failures that are not plain infeasibility.
///
/// Infeasibility of an optimization problem is reported through `Option`
/// or [`Error::Infeasible`] at the top level, never through the other
/// variants.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("solver did not converge: {0}")]
    Solver(String),
    #[error("instance infeasible: {0}")]
    Infeasible(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
