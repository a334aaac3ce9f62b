//! Reduced equilibrium states of systems strongly coupled to harmonic
//! environments, computed three independent ways and cross-checked:
//!
//! 1. stochastic averaging of quenched imaginary-time propagators driven by
//!    a colored Gaussian field whose covariance is the Euclidean influence
//!    kernel of the bath,
//! 2. the commuting-sector closed form, where the bath collapses to a single
//!    reorganization energy and shifts the potential by -λ f²,
//! 3. finite-bath trace-outs (a displaced-oscillator closed form and a
//!    truncated-Fock exact diagonalization).
//!
//! From the averaged state the crate extracts the mean-force Hamiltonian
//! via the Hermitian logarithm, fits it in the {𝕀, H_S, f²} operator basis,
//! and reports per-level shifts with propagated error bars. The
//! [`experiments`] module packages the standard benchmark sweeps as
//! machine-readable tables; [`validate`] holds the acceptance checks.

pub mod bath;
pub mod config;
pub mod edref;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod fixtures;
pub mod kernel;
pub mod noise;
pub mod operator;
pub mod quad;
pub mod quench;
pub mod system;
pub mod validate;

pub use bath::{discretize, BinningScheme, DiscretizedBath, SpectralDensity};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use estimator::{DensityEstimate, Gauge, HmfFit, MeanDensity, SamplePlan};
pub use kernel::{covariance_matrix, KernelMatrix, TimeGrid};
pub use noise::{factorize, NoiseFactor, NoisePath};
pub use operator::{gibbs_state, herm_expm, herm_logm, hs_inner, HermitianOperator};
pub use quench::{commuting_propagator, hermitize, quenched_propagator, QuenchedSample};
pub use system::{build_system, CouplingSpec, SystemModel};
