use thiserror::Error;

use crate::graph::Diagnostic;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid membership: {0}")]
    InvalidMembership(String),

    #[error("invalid cluster matrix: {0}")]
    InvalidClusterMatrix(String),

    #[error("invalid block matrix: {0}")]
    InvalidBlockMatrix(String),

    #[error("invalid dynamics parameters: {0}")]
    InvalidDynamics(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("invalid graph sequence ({} problem(s)): {}", .0.len(), first_diagnostic(.0))]
    InvalidSequence(Vec<Diagnostic>),

    #[error("dimension mismatch: expected {expected}, found {found} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("community {0} is empty")]
    EmptyCommunity(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn first_diagnostic(d: &[Diagnostic]) -> String {
    d.first().map(|d| d.to_string()).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
