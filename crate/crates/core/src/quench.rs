//! The quenched imaginary-time propagator for one noise realization: the
//! time-ordered product of slice exponentials of H - ξ(τ) f, with fast tiers
//! for diagonal generators and for the commuting sector.
//!
//! Each slice exponentiates the *full* generator exactly, so the only
//! discretization left is the piecewise-constant representation of ξ on its
//! own sampling grid; no operator splitting is involved.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{integrated_field, NoisePath};
use crate::operator::{expm_raw, herm_expm};
use crate::system::SystemModel;

/// One realization of the time-ordered exponential, with the integrated
/// field kept for diagnostics. In the commuting sector `u` is Hermitian
/// positive definite; in general it is a product of positive-definite
/// factors (so det u > 0) but need not be Hermitian.
#[derive(Debug, Clone)]
pub struct QuenchedSample {
    pub u: DMatrix<Complex64>,
    pub x: f64,
}

/// Time-ordered slice product
/// `U = e^{-Δ(H - ξ_{N-1} f)} ··· e^{-Δ(H - ξ_0 f)}`
/// (later imaginary times leftmost), each slice exponentiated exactly.
///
/// When both H and f are diagonal the slice exponentials collapse to
/// elementwise products; otherwise each slice takes one d×d Hermitian
/// eigendecomposition.
pub fn quenched_propagator(sys: &SystemModel, path: &NoisePath) -> Result<QuenchedSample> {
    let delta = path.grid().delta();
    let x = integrated_field(path);
    if sys.is_diagonal_pair() {
        let energies = sys.level_energies();
        let f_diag = sys.coupling().diagonal_re();
        let d = sys.dim();
        let mut diag = vec![1.0f64; d];
        for &xi in path.values().iter() {
            for n in 0..d {
                diag[n] *= (-delta * (energies[n] - xi * f_diag[n])).exp();
            }
        }
        let mut u = DMatrix::zeros(d, d);
        for n in 0..d {
            u[(n, n)] = Complex64::new(diag[n], 0.0);
        }
        return Ok(QuenchedSample { u, x });
    }

    let h = sys.hamiltonian().matrix();
    let f = sys.coupling().matrix();
    let d = sys.dim();
    let mut u = DMatrix::<Complex64>::identity(d, d);
    for &xi in path.values().iter() {
        let gen = h - f.scale(xi);
        let slice = expm_raw(&gen, -delta)?;
        u = slice * u;
    }
    Ok(QuenchedSample { u, x })
}

/// Commuting-sector closed form `U = e^{-β H + X f}`: when [H, f] = 0 the
/// ordering is redundant and only the integrated field X matters. O(d) per
/// sample for diagonal systems, which is what makes the Monte Carlo loop
/// cheap.
pub fn commuting_propagator(sys: &SystemModel, beta: f64, x: f64) -> Result<QuenchedSample> {
    if !sys.is_commuting() {
        return Err(Error::ContractViolation(
            "commuting_propagator called on a non-commuting system".into(),
        ));
    }
    if sys.is_diagonal_pair() {
        let energies = sys.level_energies();
        let f_diag = sys.coupling().diagonal_re();
        let d = sys.dim();
        let mut u = DMatrix::zeros(d, d);
        for n in 0..d {
            u[(n, n)] = Complex64::new((-beta * energies[n] + x * f_diag[n]).exp(), 0.0);
        }
        return Ok(QuenchedSample { u, x });
    }
    let gen = sys
        .hamiltonian()
        .scaled(-beta)
        .add(&sys.coupling().scaled(x))?;
    let u = herm_expm(&gen, 1.0)?;
    Ok(QuenchedSample {
        u: u.into_matrix(),
        x,
    })
}

/// Replace U by (U + U†)/2. The time-reversed path generates U† with equal
/// probability, so this is mean-preserving for the noise average while
/// enforcing hermiticity per sample.
pub fn hermitize(sample: QuenchedSample) -> QuenchedSample {
    let u = (&sample.u + sample.u.adjoint()).scale(0.5);
    QuenchedSample { u, x: sample.x }
}

/// The propagator the sampling loop should use: the X-only closed form in
/// the commuting sector, the ordered slice product otherwise.
pub fn sampling_propagator(sys: &SystemModel, path: &NoisePath) -> Result<QuenchedSample> {
    if sys.is_commuting() {
        commuting_propagator(sys, path.grid().beta(), integrated_field(path))
    } else {
        quenched_propagator(sys, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::TimeGrid;
    use crate::operator::HermitianOperator;
    use crate::system::{build_system, default_five_level, CouplingSpec};
    use crate::fixtures::random_noncommuting_system;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    fn random_path(grid: TimeGrid, scale: f64, seed: u64) -> NoisePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = DVector::from_fn(grid.len(), |_, _| rng.random_range(-scale..scale));
        NoisePath::new(grid, values).unwrap()
    }

    #[test]
    fn zero_path_gives_free_propagator() {
        let sys = default_five_level();
        let grid = TimeGrid::new(2.0, 64).unwrap();
        let path = NoisePath::new(grid, DVector::zeros(64)).unwrap();
        let u = quenched_propagator(&sys, &path).unwrap();
        for (n, &e) in sys.level_energies().iter().enumerate() {
            assert_relative_eq!(u.u[(n, n)].re, (-2.0 * e).exp(), max_relative = 1e-12);
        }
        assert_eq!(u.x, 0.0);
    }

    #[test]
    fn single_slice_is_one_exponential() {
        let sys = default_five_level();
        let beta = 1.3;
        let grid = TimeGrid::new(beta, 1).unwrap();
        let c = 0.8;
        let path = NoisePath::new(grid, DVector::from_element(1, c)).unwrap();
        let u = quenched_propagator(&sys, &path).unwrap();
        // e^{-β(H - c f)} for the diagonal benchmark
        let f_diag = sys.coupling().diagonal_re();
        for (n, &e) in sys.level_energies().iter().enumerate() {
            assert_relative_eq!(
                u.u[(n, n)].re,
                (-beta * (e - c * f_diag[n])).exp(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn commuting_two_level_arithmetic() {
        let sys = build_system(&[0.0, 1.0], CouplingSpec::Projector(1)).unwrap();
        let s = commuting_propagator(&sys, 1.0, 1.0).unwrap();
        assert_relative_eq!(s.u[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(s.u[(1, 1)].re, 1.0, epsilon = 1e-14); // e^{-1+1}
    }

    #[test]
    fn commuting_propagator_rejects_noncommuting() {
        let sys = random_noncommuting_system(3, 5);
        assert!(matches!(
            commuting_propagator(&sys, 1.0, 0.0),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn ordered_product_matches_commuting_closed_form() {
        let sys = default_five_level();
        for n in [16usize, 128] {
            let grid = TimeGrid::new(2.0, n).unwrap();
            for seed in 0..20u64 {
                let path = random_path(grid, 1.5, seed);
                let q = quenched_propagator(&sys, &path).unwrap();
                let c = commuting_propagator(&sys, grid.beta(), q.x).unwrap();
                let scale = c.u.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
                assert!(
                    max_abs_diff(&q.u, &c.u) <= 1e-12 * scale,
                    "N = {n}, seed = {seed}"
                );
            }
        }
    }

    #[test]
    fn general_tier_matches_diagonal_tier() {
        // A commuting but non-diagonal coupling exercises the eigen-based
        // slice product against the closed form.
        let mut fm = DMatrix::<Complex64>::zeros(2, 2);
        fm[(0, 0)] = Complex64::new(0.3, 0.0);
        fm[(1, 1)] = Complex64::new(0.3, 0.0);
        let f = HermitianOperator::from_matrix(fm).unwrap();
        let sys = build_system(&[0.0, 0.0], CouplingSpec::Matrix(f)).unwrap();
        assert!(sys.is_commuting());
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let path = random_path(grid, 1.0, 3);
        let q = quenched_propagator(&sys, &path).unwrap();
        let c = commuting_propagator(&sys, 1.0, q.x).unwrap();
        assert!(max_abs_diff(&q.u, &c.u) < 1e-13);
    }

    #[test]
    fn time_reversed_path_gives_adjoint() {
        for seed in 0..10u64 {
            let sys = random_noncommuting_system(4, 100 + seed);
            let grid = TimeGrid::new(2.0, 48).unwrap();
            let path = random_path(grid, 1.0, seed);
            let u = quenched_propagator(&sys, &path).unwrap();
            let v = quenched_propagator(&sys, &path.reversed()).unwrap();
            let scale = u.u.iter().fold(1.0f64, |acc, z| acc.max(z.norm()));
            assert!(
                max_abs_diff(&v.u, &u.u.adjoint()) <= 1e-12 * scale,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn commuting_sample_unchanged_by_hermitize() {
        let sys = default_five_level();
        let s = commuting_propagator(&sys, 2.0, 0.7).unwrap();
        let h = hermitize(s.clone());
        assert!(max_abs_diff(&h.u, &s.u) < 1e-13);
    }

    #[test]
    fn hermitize_enforces_hermiticity() {
        let sys = random_noncommuting_system(4, 9);
        let grid = TimeGrid::new(1.5, 32).unwrap();
        let path = random_path(grid, 1.0, 4);
        let s = hermitize(quenched_propagator(&sys, &path).unwrap());
        let drift = (&s.u - s.u.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        assert!(drift < 1e-15);
    }

    #[test]
    fn slice_count_irrelevant_in_commuting_sector() {
        // For a commuting system U depends on the path only through X; two
        // grids carrying the same X give the same propagator.
        let sys = default_five_level();
        let beta = 2.0;
        let x = 0.9;
        let coarse = TimeGrid::new(beta, 4).unwrap();
        let fine = TimeGrid::new(beta, 256).unwrap();
        let pc = NoisePath::new(coarse, DVector::from_element(4, x / beta)).unwrap();
        let pf = NoisePath::new(fine, DVector::from_element(256, x / beta)).unwrap();
        let uc = quenched_propagator(&sys, &pc).unwrap();
        let uf = quenched_propagator(&sys, &pf).unwrap();
        assert!(max_abs_diff(&uc.u, &uf.u) < 1e-12);
    }

    #[test]
    fn slice_refinement_converges_for_smooth_fields() {
        let sys = random_noncommuting_system(3, 77);
        let beta = 1.0;
        let field = |tau: f64| (2.0 * std::f64::consts::PI * tau).sin();
        let build = |n: usize| {
            let grid = TimeGrid::new(beta, n).unwrap();
            let values = DVector::from_fn(n, |j, _| field(grid.midpoint(j)));
            NoisePath::new(grid, values).unwrap()
        };
        let u_64 = quenched_propagator(&sys, &build(64)).unwrap();
        let u_128 = quenched_propagator(&sys, &build(128)).unwrap();
        let u_256 = quenched_propagator(&sys, &build(256)).unwrap();
        let d1 = max_abs_diff(&u_64.u, &u_128.u);
        let d2 = max_abs_diff(&u_128.u, &u_256.u);
        assert!(d2 < d1, "refinement should contract: {d1} -> {d2}");
    }

    #[test]
    fn positive_determinant_in_general_sector() {
        let sys = random_noncommuting_system(4, 31);
        let grid = TimeGrid::new(2.0, 32).unwrap();
        let path = random_path(grid, 1.2, 8);
        let u = quenched_propagator(&sys, &path).unwrap();
        let det = u.u.determinant();
        assert!(det.re > 0.0 && det.im.abs() < 1e-10 * det.re);
    }
}
