//! Numerical laboratory for eigenvalues of plate and elasticity operators on
//! mapped planar disks: spectra of seven elliptic eigenproblems, boundary-integral
//! shape derivatives of symmetric functions of eigenvalue clusters, Rellich–Nagy
//! branch slopes, and ball-criticality residuals, all cross-checked against
//! finite differences and closed-form disk spectra.

pub mod assembly;
pub mod cli;
pub mod eigensolve;
pub mod geometry;
pub mod hadamard;
pub mod jet;
pub mod mesh;
pub mod perturb;
pub mod quadrature;
pub mod selftest;
pub mod sparse;
pub mod special;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("map is not injective on the disk: {0}")]
    NonInjectiveMap(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("eigensolver error: {0}")]
    Eigensolve(String),
    #[error("trace recovery error: {0}")]
    Traces(String),
    #[error("cluster not usable for boundary-integral formulas: {0}")]
    UnusableCluster(String),
    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Global seed for the reproducible parts of the pipeline (Lanczos start
/// vectors, probe points). Read from `SPECTRA_SHAPE_SEED`, default 0.
pub fn global_seed() -> u64 {
    std::env::var("SPECTRA_SHAPE_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}
