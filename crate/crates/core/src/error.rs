//! Shared error type for the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid drift vector: ‖ω‖₂ = {norm} must be < 1")]
    InvalidDrift { norm: f64 },

    #[error("degenerate pair: ‖y − x‖₂ = {dist} is below the distance floor")]
    DegeneratePair { dist: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("graph is disconnected ({components} weak components); run connect_components first")]
    Disconnected { components: usize },

    #[error("scale solver did not converge for row {row} (best σ = {best_sigma}, residual = {residual})")]
    ScaleSolver {
        row: usize,
        best_sigma: f64,
        residual: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid_param(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
