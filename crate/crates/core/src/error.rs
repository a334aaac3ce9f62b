//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by operator algebra, sampling, and the exact-diagonalization
/// references.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian: max |M - M†| = {drift:e} exceeds tolerance {tol:e}")]
    NotHermitian { drift: f64, tol: f64 },

    /// A matrix-function result drifted off the Hermitian manifold by more
    /// than the repair budget. This signals corrupted input, not roundoff.
    #[error("hermiticity drift {drift:e} after matrix function exceeds {tol:e}")]
    HermiticityDrift { drift: f64, tol: f64 },

    #[error("symmetric eigendecomposition did not converge")]
    EigenFailed,

    /// The operator handed to the matrix logarithm has a non-positive
    /// eigenvalue. Downstream this usually means the Monte Carlo estimate of
    /// the density is not yet positive definite (too few samples).
    #[error("operator not positive definite: smallest eigenvalue {min_eigenvalue:e}")]
    Positivity { min_eigenvalue: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Negative covariance eigenvalues beyond the float-noise budget: the
    /// covariance construction itself is wrong, do not sample from it.
    #[error(
        "indefinite covariance: clipped eigenvalue mass {clipped_mass:e} exceeds budget {budget:e}"
    )]
    IndefiniteCovariance { clipped_mass: f64, budget: f64 },

    #[error("quadrature did not converge: error estimate {achieved:e} > requested {requested:e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("negative frequency {0} passed to spectral density")]
    NegativeFrequency(f64),

    #[error("imaginary-time offset |tau| = {tau} outside [0, beta = {beta}]")]
    TauOutOfRange { tau: f64, beta: f64 },

    #[error("need at least {needed} samples, have {have}")]
    InsufficientSamples { needed: u64, have: u64 },

    #[error("fit basis is degenerate (Gram matrix singular)")]
    SingularBasis,

    #[error("Fock space dimension {dim} exceeds budget {budget}")]
    FockBudgetExceeded { dim: usize, budget: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
