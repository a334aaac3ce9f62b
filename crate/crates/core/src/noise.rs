//! Sampling the stationary Gaussian field ξ(τ) with covariance K(τ - τ'):
//! factor the covariance once, then draw paths as L·w with white noise w.
//!
//! Reproducibility contract: every path is generated from its own counter
//! stream of a seeded ChaCha generator, so results are identical regardless
//! of how samples are sharded across workers.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, TimeGrid};

/// Relative budget for eigenvalue mass clipped during PSD repair; anything
/// larger means the covariance construction is wrong.
pub const CLIP_BUDGET_REL: f64 = 1e-8;

/// A factor L with L·Lᵀ = Σ (after PSD repair), ready for sampling.
#[derive(Debug, Clone)]
pub struct NoiseFactor {
    grid: TimeGrid,
    l: DMatrix<f64>,
    clipped_mass: f64,
}

impl NoiseFactor {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Total negative eigenvalue mass clipped to zero during factorization
    /// (diagnostics; zero when the plain Cholesky succeeded).
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }
}

/// One realization of the auxiliary field on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    grid: TimeGrid,
    values: DVector<f64>,
}

impl NoisePath {
    pub fn new(grid: TimeGrid, values: DVector<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::ContractViolation("noise path has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// The time-reversed path ξ(β - τ), equally likely under the stationary
    /// measure.
    pub fn reversed(&self) -> NoisePath {
        let n = self.values.len();
        let values = DVector::from_fn(n, |i, _| self.values[n - 1 - i]);
        Self {
            grid: self.grid,
            values,
        }
    }
}

/// Factor the covariance: Cholesky when Σ is numerically positive definite,
/// otherwise a symmetric eigen-factorization with negative eigenvalues
/// clipped to zero. Clipped mass beyond `CLIP_BUDGET_REL · tr Σ` is an error.
pub fn factorize(sigma: &KernelMatrix) -> Result<NoiseFactor> {
    let m = sigma.sigma();
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(NoiseFactor {
            grid: *sigma.grid(),
            l: chol.unpack(),
            clipped_mass: 0.0,
        });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailed)?;
    let mut clipped_mass = 0.0;
    let mut sqrt_vals = eig.eigenvalues.clone();
    for v in sqrt_vals.iter_mut() {
        if *v < 0.0 {
            clipped_mass += -*v;
            *v = 0.0;
        }
        *v = v.sqrt();
    }
    let budget = CLIP_BUDGET_REL * m.trace().max(0.0);
    if clipped_mass > budget {
        return Err(Error::IndefiniteCovariance {
            clipped_mass,
            budget,
        });
    }
    let mut l = eig.eigenvectors;
    for (j, &s) in sqrt_vals.iter().enumerate() {
        for i in 0..l.nrows() {
            l[(i, j)] *= s;
        }
    }
    Ok(NoiseFactor {
        grid: *sigma.grid(),
        l,
        clipped_mass,
    })
}

/// Seeded generator for one sample stream. Streams are independent for
/// distinct `stream` values under the same seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw ξ = L·w with w i.i.d. standard normal from the given generator.
pub fn sample_path<R: Rng>(factor: &NoiseFactor, rng: &mut R) -> NoisePath {
    let n = factor.grid.len();
    let w = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    NoisePath {
        grid: factor.grid,
        values: &factor.l * w,
    }
}

/// Midpoint-rule integral X = Δ Σ_j ξ_j of the field over [0, β].
pub fn integrated_field(path: &NoisePath) -> f64 {
    path.grid.delta() * path.values.sum()
}

/// The sign-flipped path, an antithetic partner under the zero-mean Gaussian
/// measure.
pub fn antithetic_pair(path: &NoisePath) -> NoisePath {
    NoisePath {
        grid: path.grid,
        values: -&path.values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{discretize, BinningScheme, SpectralDensity};
    use crate::kernel::{c_beta, covariance_matrix};
    use approx::assert_relative_eq;

    fn ohmic_factor(g: f64, beta: f64, n: usize) -> (NoiseFactor, crate::bath::DiscretizedBath) {
        let j = SpectralDensity::ohmic(g, 1.0).unwrap();
        let bath = discretize(&j, 200, 8.0, BinningScheme::Midpoint).unwrap();
        let grid = TimeGrid::new(beta, n).unwrap();
        let sigma = covariance_matrix(&bath, &grid).unwrap();
        (factorize(&sigma).unwrap(), bath)
    }

    #[test]
    fn zero_covariance_gives_zero_factor() {
        let j = SpectralDensity::ohmic(0.0, 1.0).unwrap();
        let bath = discretize(&j, 8, 8.0, BinningScheme::Midpoint).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let sigma = covariance_matrix(&bath, &grid).unwrap();
        let f = factorize(&sigma).unwrap();
        assert_eq!(f.clipped_mass(), 0.0);
        assert!(f.factor().iter().all(|&v| v == 0.0));
        let mut rng = stream_rng(1, 0);
        let p = sample_path(&f, &mut rng);
        assert!(p.values().iter().all(|&v| v == 0.0));
        assert_eq!(integrated_field(&p), 0.0);
    }

    #[test]
    fn identity_covariance_factor_is_identity() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let km = KernelMatrix::from_parts(grid, DMatrix::identity(4, 4)).unwrap();
        let f = factorize(&km).unwrap();
        assert_relative_eq!(
            (f.factor() - DMatrix::<f64>::identity(4, 4)).norm(),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn factor_reconstructs_covariance() {
        let (f, _) = ohmic_factor(1.0, 2.0, 64);
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        let bath = discretize(&j, 200, 8.0, BinningScheme::Midpoint).unwrap();
        let grid = TimeGrid::new(2.0, 64).unwrap();
        let sigma = covariance_matrix(&bath, &grid).unwrap();
        let recon = f.factor() * f.factor().transpose();
        let max_sigma = sigma.sigma().amax();
        let err = (&recon - sigma.sigma()).amax();
        assert!(
            err <= 1e-10 * max_sigma + f.clipped_mass(),
            "reconstruction error {err}"
        );
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let mut m = DMatrix::identity(2, 2);
        m[(0, 1)] = 2.0;
        m[(1, 0)] = 2.0; // eigenvalues 3 and -1: far beyond float noise
        let km = KernelMatrix::from_parts(grid, m).unwrap();
        assert!(matches!(
            factorize(&km),
            Err(Error::IndefiniteCovariance { .. })
        ));
    }

    #[test]
    fn tiny_negative_eigenvalues_are_repaired() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        let eps = 1e-14;
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = 1.0;
        m[(1, 1)] = -eps;
        let km = KernelMatrix::from_parts(grid, m).unwrap();
        let f = factorize(&km).unwrap();
        assert!(f.clipped_mass() > 0.0 && f.clipped_mass() < 1e-12);
    }

    #[test]
    fn same_stream_reproduces_path_bitwise() {
        let (f, _) = ohmic_factor(1.0, 2.0, 32);
        let p1 = sample_path(&f, &mut stream_rng(42, 7));
        let p2 = sample_path(&f, &mut stream_rng(42, 7));
        assert_eq!(p1.values(), p2.values());
        let p3 = sample_path(&f, &mut stream_rng(42, 8));
        assert_ne!(p1.values(), p3.values());
    }

    #[test]
    fn integrated_field_of_constant_path() {
        let grid = TimeGrid::new(2.0, 16).unwrap();
        let path = NoisePath::new(grid, DVector::from_element(16, 3.0)).unwrap();
        assert_relative_eq!(integrated_field(&path), 3.0 * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn antithetic_flips_integrated_field() {
        let (f, _) = ohmic_factor(1.0, 2.0, 32);
        let p = sample_path(&f, &mut stream_rng(3, 0));
        let q = antithetic_pair(&p);
        assert_relative_eq!(
            integrated_field(&q),
            -integrated_field(&p),
            epsilon = 1e-14
        );
    }

    #[test]
    fn reversed_path_reverses_values() {
        let grid = TimeGrid::new(1.0, 3).unwrap();
        let p = NoisePath::new(grid, DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(p.reversed().values().as_slice(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn sample_covariance_matches_sigma() {
        let n = 64;
        let samples = 100_000usize;
        let (f, _) = ohmic_factor(1.0, 2.0, n);
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        let bath = discretize(&j, 200, 8.0, BinningScheme::Midpoint).unwrap();
        let grid = TimeGrid::new(2.0, n).unwrap();
        let sigma = covariance_matrix(&bath, &grid).unwrap();

        let mut mean = vec![0.0f64; n];
        let mut cov0 = vec![0.0f64; n];
        for s in 0..samples {
            let p = sample_path(&f, &mut stream_rng(9, s as u64));
            for (jj, &v) in p.values().iter().enumerate() {
                mean[jj] += v;
                cov0[jj] += p.values()[0] * v;
            }
        }
        let m = samples as f64;
        for jj in 0..n {
            mean[jj] /= m;
            cov0[jj] = cov0[jj] / m - mean[0] * mean[jj];
        }
        for jj in 0..n {
            let s0j = sigma.sigma()[(0, jj)];
            let se = ((sigma.sigma()[(0, 0)] * sigma.sigma()[(jj, jj)] + s0j * s0j) / m).sqrt();
            assert!(
                (cov0[jj] - s0j).abs() <= 4.0 * se,
                "cov(xi_0, xi_{jj}) = {} vs {} (4se = {})",
                cov0[jj],
                s0j,
                4.0 * se
            );
            // component means vanish
            let se_mean = (sigma.sigma()[(jj, jj)] / m).sqrt();
            assert!(mean[jj].abs() <= 4.0 * se_mean);
        }
    }

    #[test]
    fn integrated_field_variance_matches_c_beta() {
        let n = 64;
        let samples = 100_000usize;
        let beta = 2.0;
        let (f, bath) = ohmic_factor(1.0, beta, n);
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        for s in 0..samples {
            let p = sample_path(&f, &mut stream_rng(17, s as u64));
            let x = integrated_field(&p);
            sum += x;
            sum2 += x * x;
            sum4 += x * x * x * x;
        }
        let m = samples as f64;
        let mean = sum / m;
        let var = (sum2 - m * mean * mean) / (m - 1.0);
        let m2 = sum2 / m - mean * mean;
        let m4 = sum4 / m; // mean ~ 0, raw fourth moment ~ central
        let var_of_var = (m4 - (m - 3.0) / (m - 1.0) * m2 * m2) / m;
        let se = var_of_var.max(0.0).sqrt();

        // The sampler's true variance is the midpoint double sum, which sits
        // within O(Δ²) of 2βλ_disc; both must be inside the 4σ band.
        let target = c_beta(&bath, beta);
        assert!(
            (var - target).abs() <= 4.0 * se,
            "Var(X) = {var} vs 2βλ_disc = {target} (4se = {})",
            4.0 * se
        );
    }

    #[test]
    fn antithetic_reduces_estimator_variance() {
        // Estimate E[e^X] (the commuting-sector weight) with and without
        // pairing at a fixed budget of propagator evaluations.
        let n = 64;
        let pairs = 4000usize;
        let (f, _) = ohmic_factor(0.8, 2.0, n);

        let estimates = |antithetic: bool| -> (f64, f64) {
            let mut vals = Vec::with_capacity(pairs);
            for s in 0..pairs {
                let p = sample_path(&f, &mut stream_rng(23, s as u64));
                let x = integrated_field(&p);
                if antithetic {
                    vals.push(0.5 * (x.exp() + (-x).exp()));
                } else {
                    // burn a second independent stream to equalize the budget
                    let p2 = sample_path(&f, &mut stream_rng(23, (pairs + s) as u64));
                    let x2 = integrated_field(&p2);
                    vals.push(0.5 * (x.exp() + x2.exp()));
                }
            }
            let m = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
            (mean, var)
        };

        let (_, var_anti) = estimates(true);
        let (_, var_plain) = estimates(false);
        assert!(
            var_anti <= var_plain,
            "antithetic variance {var_anti} should not exceed plain {var_plain}"
        );
    }
}
