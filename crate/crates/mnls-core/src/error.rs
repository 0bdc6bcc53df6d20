//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value in {what} at node {index}")]
    NonFinite { what: String, index: usize },

    #[error("boundary tail mass fraction {measured:.3e} exceeds tolerance {tolerance:.3e}")]
    TailMass { measured: f64, tolerance: f64 },

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("operation requires {required} regime but p = {p}, N = {dim}")]
    WrongRegime {
        required: &'static str,
        p: f64,
        dim: usize,
    },

    #[error("{what} undefined: {why}")]
    Undefined { what: &'static str, why: String },

    #[error("bracket search failed: {0}")]
    BracketFailure(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("flow collapsed to the zero field")]
    ZeroCollapse,

    #[error("energy diverging ({energy:.3e}); constraint set likely unbounded below in this regime")]
    EnergyDiverged { energy: f64 },

    #[error("recorded times are not uniformly spaced")]
    NonUniformStride,

    #[error("experiment configuration error: {0}")]
    BadExperiment(String),

    #[error("snapshot format error: {0}")]
    BadSnapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Config(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
