//! Shared fixtures for tests and benchmarks: random Hermitian operators,
//! random non-commuting systems, and the default benchmark pipeline pieces.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bath::{discretize, BinningScheme, DiscretizedBath, SpectralDensity};
use crate::kernel::{covariance_matrix, TimeGrid};
use crate::noise::{factorize, NoiseFactor};
use crate::operator::HermitianOperator;
use crate::system::SystemModel;

/// Dense random Hermitian operator with entries of the given scale.
pub fn random_hermitian(dim: usize, scale: f64, seed: u64) -> HermitianOperator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = Complex64::new(rng.random_range(-scale..scale), 0.0);
        for j in (i + 1)..dim {
            let z = Complex64::new(
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
            );
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    HermitianOperator::from_matrix(m).expect("constructed Hermitian")
}

/// A random system whose Hamiltonian and coupling do not commute.
pub fn random_noncommuting_system(dim: usize, seed: u64) -> SystemModel {
    let h = random_hermitian(dim, 1.0, seed.wrapping_mul(2).wrapping_add(1));
    let f = random_hermitian(dim, 0.6, seed.wrapping_mul(2).wrapping_add(2));
    let sys = SystemModel::new(h, f).expect("same dims");
    assert!(!sys.is_commuting(), "random pair unexpectedly commutes");
    sys
}

/// Default Ohmic bath at coupling `g` (200 bins on (0, 8]).
pub fn ohmic_bath(g: f64) -> DiscretizedBath {
    let j = SpectralDensity::ohmic(g, 1.0).expect("valid density");
    discretize(&j, 200, 8.0, BinningScheme::Midpoint).expect("valid bins")
}

/// Noise factor for the default bath on a β-grid with `n` slices.
pub fn ohmic_factor(g: f64, beta: f64, n: usize) -> (NoiseFactor, DiscretizedBath) {
    let bath = ohmic_bath(g);
    let grid = TimeGrid::new(beta, n).expect("valid grid");
    let sigma = covariance_matrix(&bath, &grid).expect("covariance");
    (factorize(&sigma).expect("factorizable"), bath)
}
