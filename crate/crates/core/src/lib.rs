//! Sparse precision-matrix estimation by block Cholesky decomposition.

pub mod block_model;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod glasso;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod predict;
pub mod scenario;
pub mod selection;
pub mod simulation;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
