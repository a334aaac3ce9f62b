//! The Euclidean influence kernel K(τ), its covariance matrix on the
//! imaginary-time grid, and the integrated variance C(β).
//!
//! The noise covariance is always built from the *discretized* bath (a mode
//! sum), never the continuum integral, so every downstream consistency check
//! closes exactly against `λ_disc`. Field values live at slice midpoints and
//! τ-integrals use the midpoint rule with weight Δ.

use nalgebra::DMatrix;

use crate::bath::{DiscretizedBath, SpectralDensity};
use crate::error::{Error, Result};
use crate::quad;

/// Uniform grid of `n` imaginary-time slices on [0, β]; field values sit at
/// the slice midpoints τ_j = (j + ½) β/n.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    beta: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(beta: f64, n: usize) -> Result<Self> {
        if beta <= 0.0 {
            return Err(Error::InvalidConfig(format!("beta must be > 0, got {beta}")));
        }
        if n == 0 {
            return Err(Error::InvalidConfig("need at least one time slice".into()));
        }
        Ok(Self { beta, n })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Slice width Δ = β/n.
    pub fn delta(&self) -> f64 {
        self.beta / self.n as f64
    }

    /// Midpoint τ_j = (j + ½)Δ.
    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.delta()
    }
}

/// Single-mode kernel `(c²/2ω) cosh[ω(β/2 - u)] / sinh(βω/2)` with
/// `u = min(|τ|, β - |τ|)`, evaluated in an overflow-free form (all
/// exponents non-positive).
fn mode_kernel(omega: f64, coupling_sq: f64, tau: f64, beta: f64) -> f64 {
    let u = tau.abs().min(beta - tau.abs());
    let a = omega * (0.5 * beta - u); // in [0, βω/2]
    let b = 0.5 * beta * omega;
    // cosh(a)/sinh(b) = (e^{a-b} + e^{-a-b}) / (1 - e^{-2b})
    let denom = -(-2.0 * b).exp_m1();
    (coupling_sq / (2.0 * omega)) * ((a - b).exp() + (-a - b).exp()) / denom
}

/// Influence kernel of a discretized bath at imaginary-time offset `tau`,
/// `K(τ) = Σ_k (c_k²/2ω_k) cosh[ω_k(β/2 - |τ|)] / sinh(βω_k/2)`.
///
/// Even in τ and symmetric about τ = β/2; requires |τ| ≤ β.
pub fn kernel_discrete(bath: &DiscretizedBath, tau: f64, beta: f64) -> Result<f64> {
    if tau.abs() > beta {
        return Err(Error::TauOutOfRange {
            tau: tau.abs(),
            beta,
        });
    }
    Ok(bath
        .modes()
        .iter()
        .map(|m| mode_kernel(m.omega, m.coupling_sq, tau, beta))
        .sum())
}

/// Continuum influence kernel
/// `K(τ) = (1/π) ∫_0^∞ J(ω) cosh[ω(β/2 - |τ|)] / sinh(βω/2) dω`
/// by adaptive quadrature (relative error 1e-8).
///
/// On midpoint grids callers must keep τ at least half a slice away from 0
/// and β, where the Ohmic integrand becomes sharply peaked.
pub fn kernel_continuum(j: &SpectralDensity, tau: f64, beta: f64) -> Result<f64> {
    if tau.abs() > beta {
        return Err(Error::TauOutOfRange {
            tau: tau.abs(),
            beta,
        });
    }
    if j.g == 0.0 {
        return Ok(0.0);
    }
    let u = tau.abs().min(beta - tau.abs());
    let jj = *j;
    let value = quad::integrate_semi_infinite(
        move |w| {
            if w == 0.0 {
                // J(ω) ~ 2g²ω while cosh/sinh ~ 2/(βω): finite Ohmic limit.
                return 4.0 * jj.g * jj.g / beta;
            }
            let a = w * (0.5 * beta - u);
            let b = 0.5 * beta * w;
            let denom = -(-2.0 * b).exp_m1();
            jj.value(w).unwrap_or(0.0) * ((a - b).exp() + (-a - b).exp()) / denom
        },
        j.omega_c,
        1e-9,
    )?;
    Ok(value / std::f64::consts::PI)
}

/// The noise covariance on a time grid: Σ_ij = K(τ_i - τ_j). Toeplitz and
/// symmetric by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    grid: TimeGrid,
    sigma: DMatrix<f64>,
}

impl KernelMatrix {
    /// Assemble from an explicit symmetric matrix (custom covariances and
    /// test fixtures).
    pub fn from_parts(grid: TimeGrid, sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != grid.len() || sigma.ncols() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: sigma.nrows(),
            });
        }
        if (&sigma - sigma.transpose()).amax() > 0.0 {
            return Err(Error::ContractViolation(
                "covariance matrix must be exactly symmetric".into(),
            ));
        }
        Ok(Self { grid, sigma })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Build Σ_ij = K(τ_i - τ_j) from the first column (the matrix is Toeplitz,
/// so only `n` kernel evaluations are needed).
pub fn covariance_matrix(bath: &DiscretizedBath, grid: &TimeGrid) -> Result<KernelMatrix> {
    let n = grid.len();
    let delta = grid.delta();
    let beta = grid.beta();
    let lags: Vec<f64> = (0..n)
        .map(|l| kernel_discrete(bath, l as f64 * delta, beta))
        .collect::<Result<_>>()?;
    let mut sigma = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            sigma[(i, j)] = lags[i.abs_diff(j)];
        }
    }
    Ok(KernelMatrix { grid: *grid, sigma })
}

/// Integrated-field variance `C(β) = ∫_0^β ∫_0^β K(τ - τ') dτ dτ'` in closed
/// form: the per-mode double integral is `2β/ω`, so `C(β) = 2β λ_disc`.
pub fn c_beta(bath: &DiscretizedBath, beta: f64) -> f64 {
    2.0 * beta * bath.lambda_disc()
}

/// Brute-force evaluation of C(β) for cross-checks: by stationarity the
/// double integral reduces to `2 ∫_0^β (β - s) K(s) ds`, done by quadrature.
pub fn c_beta_quadrature(bath: &DiscretizedBath, beta: f64) -> Result<f64> {
    let b = bath.clone();
    let v = quad::integrate(
        move |s| (beta - s) * kernel_discrete(&b, s, beta).unwrap_or(0.0),
        0.0,
        beta,
        1e-10,
    )?;
    Ok(2.0 * v)
}
