//! Conditional randomization testing with exchangeable copies.
//!
//! The crate implements finite-sample tests of multivariate conditional
//! independence `Y independent of X_T given X_S`: exact exchangeable-copy
//! samplers for normal and graphical covariate models, a catalog of joint
//! test statistics, Monte Carlo p-values, FDR-controlled group selection,
//! and a simulation harness for size/power studies.

pub mod data;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod multiplicity;
pub mod regressors;
pub mod rng;
pub mod samplers;
pub mod sim;
pub mod statistics;

pub use data::DataMatrix;
pub use error::{Error, Result};
pub use graph::Graph;
