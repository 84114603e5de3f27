//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by samplers, fitters, statistics, and the test engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("rank-deficient design: dependent column(s) {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("insufficient sample size: n = {n} but the conditioning design has {s} columns")]
    InsufficientSample { n: usize, s: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("degenerate residual: fresh residual vanished in {attempts} resampling attempts")]
    DegenerateResidual { attempts: usize },

    #[error("invalid update order: {0}")]
    InvalidOrder(String),

    #[error("type error: {0}")]
    TypeError(String),

    #[error("statistic infeasible: {0}")]
    Infeasible(String),

    #[error("invalid supergraph: {0}")]
    InvalidSupergraph(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
