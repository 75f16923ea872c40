use std::path::PathBuf;

use thiserror::Error;

/// Errors produced while loading inputs, building models, or clearing markets.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("LP solver failure: {0}")]
    Solver(String),

    #[error("model construction error: {0}")]
    Model(String),

    #[error("day-ahead market is infeasible: {0}")]
    DamInfeasible(String),

    /// The real-time market always admits shedding and curtailment, so this
    /// points at inconsistent inputs or a bug.
    #[error("real-time market infeasible for scenario {scenario}")]
    RtmInfeasible { scenario: String },

    #[error("relaxed bilevel LP is infeasible (gamma = {gamma}, xi = {xi})")]
    RelaxationInfeasible { gamma: f64, xi: f64 },

    #[error("stochastic dispatch LP is infeasible")]
    StochasticInfeasible,

    #[error("oracle grid has {points} points, above the cap of {cap}")]
    GridTooLarge { points: u128, cap: u128 },

    #[error("unknown scenario id {0:?}")]
    UnknownScenario(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
