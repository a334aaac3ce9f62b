//! Exact finite-bath references: the displaced-oscillator closed form (the
//! machine-precision oracle in the commuting sector) and a truncated-Fock
//! exact diagonalization of the full system⊗bath space (the independent
//! brute-force oracle).
//!
//! The ED works on a small effective bath obtained by λ-preserving
//! coarsening ([`crate::bath::DiscretizedBath::coarsen`]), so its reduced
//! state closes against the same `λ_disc` as the full discretization while
//! keeping the Fock space affordable and the truncation fast-converging.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bath::DiscretizedBath;
use crate::error::{Error, Result};
use crate::operator::{eigh_raw, HermitianOperator};
use crate::system::SystemModel;

/// Truncation settings for the Fock-space diagonalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockConfig {
    /// Per-mode Fock truncation (levels 0..=n_max).
    pub n_max: usize,
    /// Number of effective bath modes to diagonalize with.
    pub k_used: usize,
    /// Cap on the total product-space dimension d·(n_max+1)^k_used.
    pub dim_budget: usize,
}

impl FockConfig {
    pub fn new(n_max: usize, k_used: usize) -> Self {
        Self {
            n_max,
            k_used,
            dim_budget: 20_000,
        }
    }
}

/// Reduced state from the truncated-Fock diagonalization plus a truncation
/// diagnostic: the max-norm population change from `n_max - 1` to `n_max`.
/// Residuals that do not shrink as `n_max` grows mean the truncation has not
/// converged and the state should not be trusted.
#[derive(Debug, Clone)]
pub struct FockReduced {
    pub rho: HermitianOperator,
    pub truncation_residual: f64,
    /// Reorganization energy of the effective (coarsened) bath actually
    /// diagonalized; equals the input bath's λ_disc by construction.
    pub lambda: f64,
}

fn require_diagonal_commuting(sys: &SystemModel, what: &str) -> Result<()> {
    if !sys.is_commuting() || !sys.is_diagonal_pair() {
        return Err(Error::ContractViolation(format!(
            "{what} requires H and f diagonal in a common basis"
        )));
    }
    Ok(())
}

/// Closed-form bath trace-out for a commuting system: per system level `n`
/// each mode is a displaced oscillator whose spectrum shifts by
/// `-f_n² c_k²/(2ω_k²)`, so the populations are
/// `p_n ∝ e^{-β(E_n - f_n² Σ_k c_k²/(2ω_k²))}` — exact, no truncation.
pub fn displaced_trace_reduced(
    sys: &SystemModel,
    bath: &DiscretizedBath,
    beta: f64,
) -> Result<HermitianOperator> {
    require_diagonal_commuting(sys, "displaced_trace_reduced")?;
    let energies = sys.level_energies();
    let f_diag = sys.coupling().diagonal_re();
    let exponents: Vec<f64> = energies
        .iter()
        .zip(f_diag.iter())
        .map(|(&e, &fnn)| {
            let shift: f64 = bath
                .modes()
                .iter()
                .map(|m| m.lambda_contribution() * fnn * fnn)
                .sum();
            -beta * (e - shift)
        })
        .collect();
    Ok(normalized_diagonal(&exponents))
}

/// Normalize `p_n ∝ e^{a_n}` with a max shift against overflow.
fn normalized_diagonal(log_weights: &[f64]) -> HermitianOperator {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|a| (a - max).exp()).collect();
    let z: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|v| v / z).collect();
    HermitianOperator::from_real_diagonal(&p)
}

/// ln Σ_i e^{-β λ_i} evaluated stably.
fn log_trace_exp(eigenvalues: &[f64], beta: f64) -> f64 {
    let min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let s: f64 = eigenvalues.iter().map(|&e| (-beta * (e - min)).exp()).sum();
    s.ln() - beta * min
}

/// Position operator `x = (a + a†)/√(2ω)` on a truncated Fock space.
fn position_matrix(m: usize, omega: f64) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(m, m);
    for n in 0..m.saturating_sub(1) {
        let v = ((n + 1) as f64 / (2.0 * omega)).sqrt();
        x[(n, n + 1)] = v;
        x[(n + 1, n)] = v;
    }
    x
}

/// Harmonic mode Hamiltonian ω(n̂ + ½) on a truncated Fock space.
fn mode_hamiltonian(m: usize, omega: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            omega * (i as f64 + 0.5)
        } else {
            0.0
        }
    })
}

/// Kronecker-sum term: I_{m^pre} ⊗ h ⊗ I_{m^post}.
fn kron_embed(h: &DMatrix<f64>, m: usize, pre: usize, post: usize) -> DMatrix<f64> {
    let left = DMatrix::<f64>::identity(m.pow(pre as u32), m.pow(pre as u32));
    let right = DMatrix::<f64>::identity(m.pow(post as u32), m.pow(post as u32));
    left.kronecker(h).kronecker(&right)
}

/// Bath-block Hamiltonian `Σ_k [ω_k(n̂_k + ½) + f_value c_k x_k]` on the
/// product Fock space.
fn bath_block(bath: &DiscretizedBath, f_value: f64, m: usize) -> DMatrix<f64> {
    let k = bath.modes().len();
    let dim = m.pow(k as u32);
    let mut h = DMatrix::zeros(dim, dim);
    for (i, mode) in bath.modes().iter().enumerate() {
        let hk = mode_hamiltonian(m, mode.omega)
            + position_matrix(m, mode.omega).scale(f_value * mode.coupling_sq.sqrt());
        h += kron_embed(&hk, m, i, k - 1 - i);
    }
    h
}

/// Eigenvalues of the real symmetric bath block.
fn bath_block_eigenvalues(bath: &DiscretizedBath, f_value: f64, m: usize) -> Result<Vec<f64>> {
    let h = bath_block(bath, f_value, m);
    if m == 1 || h.nrows() == 1 {
        return Ok(vec![h[(0, 0)]]);
    }
    Ok(h.symmetric_eigenvalues().iter().cloned().collect())
}

/// Populations of the commuting system from the block-diagonal ED at a given
/// truncation; blocks are cached per distinct coupling eigenvalue.
fn commuting_fock_populations(
    sys: &SystemModel,
    bath: &DiscretizedBath,
    m: usize,
    beta: f64,
) -> Result<Vec<f64>> {
    let energies = sys.level_energies();
    let f_diag = sys.coupling().diagonal_re();
    let mut block_log_trace: HashMap<u64, f64> = HashMap::new();
    let mut log_weights = Vec::with_capacity(energies.len());
    for (&e, &fnn) in energies.iter().zip(f_diag.iter()) {
        let key = fnn.to_bits();
        let lt = match block_log_trace.get(&key) {
            Some(&v) => v,
            None => {
                let vals = bath_block_eigenvalues(bath, fnn, m)?;
                let v = log_trace_exp(&vals, beta);
                block_log_trace.insert(key, v);
                v
            }
        };
        log_weights.push(-beta * e + lt);
    }
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|a| (a - max).exp()).collect();
    let z: f64 = w.iter().sum();
    Ok(w.iter().map(|v| v / z).collect())
}

/// Reduced density from a full product-space diagonalization (general,
/// non-commuting path).
fn general_fock_reduced(
    sys: &SystemModel,
    bath: &DiscretizedBath,
    m: usize,
    beta: f64,
) -> Result<HermitianOperator> {
    let d = sys.dim();
    let k = bath.modes().len();
    let bath_dim = m.pow(k as u32);
    let to_c = |r: &DMatrix<f64>| r.map(|v| Complex64::new(v, 0.0));

    let bath_free = {
        let mut h = DMatrix::<f64>::zeros(bath_dim, bath_dim);
        for (i, mode) in bath.modes().iter().enumerate() {
            h += kron_embed(&mode_hamiltonian(m, mode.omega), m, i, k - 1 - i);
        }
        h
    };
    let coupling_coord = {
        let mut x = DMatrix::<f64>::zeros(bath_dim, bath_dim);
        for (i, mode) in bath.modes().iter().enumerate() {
            x += kron_embed(
                &position_matrix(m, mode.omega).scale(mode.coupling_sq.sqrt()),
                m,
                i,
                k - 1 - i,
            );
        }
        x
    };

    let eye_bath = DMatrix::<Complex64>::identity(bath_dim, bath_dim);
    let eye_sys = DMatrix::<Complex64>::identity(d, d);
    let h_tot = sys.hamiltonian().matrix().kronecker(&eye_bath)
        + eye_sys.kronecker(&to_c(&bath_free))
        + sys.coupling().matrix().kronecker(&to_c(&coupling_coord));

    let (vals, vecs) = eigh_raw(&h_tot)?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut scaled = vecs.clone();
    for (j, &e) in vals.iter().enumerate() {
        let w = Complex64::new((-beta * (e - min)).exp(), 0.0);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= w;
        }
    }
    let rho_full = HermitianOperator::from_matrix_repair(&scaled * vecs.adjoint())?;

    let mut dims = vec![d];
    dims.extend(std::iter::repeat(m).take(k));
    let reduced = partial_trace(&rho_full, &dims, 0)?;
    let trace = reduced.trace();
    HermitianOperator::from_matrix_repair(reduced.matrix().map(|z| z / trace))
}

/// Trace out the bath from the truncated-Fock thermal state of the full
/// composite Hamiltonian `H ⊗ 1 + 1 ⊗ H_X + f ⊗ Σ_k c_k x_k`.
///
/// Baths with more than `cfg.k_used` modes are first coarsened (preserving
/// λ_disc exactly). For commuting diagonal systems the composite is block
/// diagonal over system levels and only bath-block eigenvalues are needed;
/// otherwise the full space is diagonalized.
pub fn fock_ed_reduced(
    sys: &SystemModel,
    bath: &DiscretizedBath,
    cfg: &FockConfig,
    beta: f64,
) -> Result<FockReduced> {
    let bath_ed = if bath.modes().len() > cfg.k_used {
        bath.coarsen(cfg.k_used)?
    } else {
        bath.clone()
    };
    let k = bath_ed.modes().len();
    let m = cfg.n_max + 1;
    let total_dim = sys
        .dim()
        .checked_mul(m.checked_pow(k as u32).unwrap_or(usize::MAX))
        .unwrap_or(usize::MAX);
    if total_dim > cfg.dim_budget {
        return Err(Error::FockBudgetExceeded {
            dim: total_dim,
            budget: cfg.dim_budget,
        });
    }

    let coupled = bath_ed.modes().iter().any(|mo| mo.coupling_sq > 0.0)
        && sys.coupling().max_abs_entry() > 0.0;

    if sys.is_commuting() && sys.is_diagonal_pair() {
        let p = commuting_fock_populations(sys, &bath_ed, m, beta)?;
        let residual = if cfg.n_max == 0 {
            if coupled {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            let p_prev = commuting_fock_populations(sys, &bath_ed, m - 1, beta)?;
            p.iter()
                .zip(p_prev.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        return Ok(FockReduced {
            rho: HermitianOperator::from_real_diagonal(&p),
            truncation_residual: residual,
            lambda: bath_ed.lambda_disc(),
        });
    }

    let rho = general_fock_reduced(sys, &bath_ed, m, beta)?;
    let residual = if cfg.n_max == 0 {
        if coupled {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        let prev = general_fock_reduced(sys, &bath_ed, m - 1, beta)?;
        (rho.matrix() - prev.matrix())
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()))
    };
    Ok(FockReduced {
        rho,
        truncation_residual: residual,
        lambda: bath_ed.lambda_disc(),
    })
}

/// Standard partial trace: keep factor `keep` of a product space with the
/// given factor dimensions.
pub fn partial_trace(
    op: &HermitianOperator,
    dims: &[usize],
    keep: usize,
) -> Result<HermitianOperator> {
    let total: usize = dims.iter().product();
    if total != op.dim() || keep >= dims.len() || dims.iter().any(|&d| d == 0) {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            found: total,
        });
    }
    let d_keep = dims[keep];
    let mut strides = vec![1usize; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }
    let rest: usize = total / d_keep;
    let m = op.matrix();
    let mut out = DMatrix::<Complex64>::zeros(d_keep, d_keep);
    for r in 0..rest {
        // decompose the rest-index into the non-keep factors
        let mut base = 0usize;
        let mut rem = r;
        for f in (0..dims.len()).rev() {
            if f == keep {
                continue;
            }
            let idx = rem % dims[f];
            rem /= dims[f];
            base += idx * strides[f];
        }
        for i in 0..d_keep {
            for j in 0..d_keep {
                out[(i, j)] += m[(base + i * strides[keep], base + j * strides[keep])];
            }
        }
    }
    HermitianOperator::from_matrix_repair(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{discretize, BathMode, BinningScheme, SpectralDensity};
    use crate::estimator::analytic_reduced;
    use crate::operator::gibbs_state;
    use crate::system::{build_system, default_five_level, CouplingSpec};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use num_complex::Complex64;

    fn ohmic_bath(g: f64) -> DiscretizedBath {
        let j = SpectralDensity::ohmic(g, 1.0).unwrap();
        discretize(&j, 200, 8.0, BinningScheme::Midpoint).unwrap()
    }

    #[test]
    fn displaced_equals_bare_gibbs_at_zero_coupling() {
        let sys = default_five_level();
        let bath = ohmic_bath(0.0);
        let rho = displaced_trace_reduced(&sys, &bath, 2.0).unwrap();
        let gibbs = gibbs_state(sys.hamiltonian(), 2.0).unwrap();
        let err = (rho.matrix() - gibbs.matrix())
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()));
        assert!(err < 1e-14);
    }

    #[test]
    fn displaced_matches_analytic_closed_form() {
        let sys = default_five_level();
        for &g in &[0.25, 0.5, 1.0, 1.5, 2.0] {
            let bath = ohmic_bath(g);
            for &beta in &[0.25, 0.5, 1.0, 2.0, 4.0] {
                let a = displaced_trace_reduced(&sys, &bath, beta).unwrap();
                let b = analytic_reduced(&sys, bath.lambda_disc(), beta).unwrap();
                let err = (a.matrix() - b.matrix())
                    .iter()
                    .fold(0.0f64, |acc, z| acc.max(z.norm()));
                assert!(err < 1e-13, "g={g} beta={beta}: {err:e}");
            }
        }
    }

    #[test]
    fn displaced_rejects_noncommuting() {
        let sys = crate::fixtures::random_noncommuting_system(3, 1);
        let bath = ohmic_bath(0.5);
        assert!(displaced_trace_reduced(&sys, &bath, 1.0).is_err());
    }

    #[test]
    fn fock_bare_limit_is_exact() {
        let sys = default_five_level();
        let bath = ohmic_bath(0.0);
        for n_max in [0usize, 2, 5] {
            let out = fock_ed_reduced(&sys, &bath, &FockConfig::new(n_max, 2), 2.0).unwrap();
            let gibbs = gibbs_state(sys.hamiltonian(), 2.0).unwrap();
            let err = (out.rho.matrix() - gibbs.matrix())
                .iter()
                .fold(0.0f64, |a, z| a.max(z.norm()));
            assert!(err < 1e-13, "n_max {n_max}: {err:e}");
            assert_eq!(out.truncation_residual, 0.0);
        }
    }

    #[test]
    fn fock_single_mode_weak_coupling_matches_closed_form() {
        let sys = default_five_level();
        // one weakly coupled mode: displacement² = c²/(2ω³) << n_max
        let bath = DiscretizedBath::from_modes(vec![BathMode {
            omega: 1.5,
            coupling_sq: 0.05,
            width: 1.0,
        }]);
        let beta = 2.0;
        let out = fock_ed_reduced(&sys, &bath, &FockConfig::new(14, 1), beta).unwrap();
        let closed = displaced_trace_reduced(&sys, &bath, beta).unwrap();
        let err = (out.rho.matrix() - closed.matrix())
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()));
        assert!(err < 1e-8, "single-mode error {err:e}");
    }

    #[test]
    fn fock_converges_to_displaced_closed_form() {
        let sys = default_five_level();
        let bath = ohmic_bath(0.5);
        let beta = 2.0;
        let coarse = bath.coarsen(3).unwrap();
        let closed = displaced_trace_reduced(&sys, &coarse, beta).unwrap();
        let mut errors = Vec::new();
        for n_max in [4usize, 8, 12] {
            let out = fock_ed_reduced(&sys, &bath, &FockConfig::new(n_max, 3), beta).unwrap();
            let err = (out.rho.matrix() - closed.matrix())
                .iter()
                .fold(0.0f64, |a, z| a.max(z.norm()));
            errors.push(err);
        }
        assert!(
            errors[0] > errors[1] && errors[1] > errors[2],
            "errors not monotone: {errors:?}"
        );
        assert!(errors[2] <= 1e-6, "final error {:e}", errors[2]);
    }

    #[test]
    fn fock_residual_tracks_convergence() {
        let sys = default_five_level();
        let bath = ohmic_bath(0.5);
        let r4 = fock_ed_reduced(&sys, &bath, &FockConfig::new(4, 3), 2.0)
            .unwrap()
            .truncation_residual;
        let r8 = fock_ed_reduced(&sys, &bath, &FockConfig::new(8, 3), 2.0)
            .unwrap()
            .truncation_residual;
        assert!(r8 < r4, "residual should shrink: {r4:e} -> {r8:e}");
    }

    #[test]
    fn fock_budget_enforced() {
        let sys = default_five_level();
        let bath = ohmic_bath(0.5);
        let mut cfg = FockConfig::new(30, 3);
        cfg.dim_budget = 10_000;
        assert!(matches!(
            fock_ed_reduced(&sys, &bath, &cfg, 2.0),
            Err(Error::FockBudgetExceeded { .. })
        ));
    }

    #[test]
    fn general_path_agrees_with_commuting_path() {
        // Same commuting system run through both tiers at small dimension.
        let sys = build_system(&[0.0, 0.9], CouplingSpec::Projector(1)).unwrap();
        let bath = DiscretizedBath::from_modes(vec![BathMode {
            omega: 1.2,
            coupling_sq: 0.08,
            width: 1.0,
        }]);
        let beta = 1.5;
        let m = 10;
        let fast = commuting_fock_populations(&sys, &bath, m, beta).unwrap();
        let general = general_fock_reduced(&sys, &bath, m, beta).unwrap();
        for n in 0..2 {
            assert_relative_eq!(general.matrix()[(n, n)].re, fast[n], epsilon = 1e-10);
        }
    }

    #[test]
    fn general_path_handles_noncommuting_coupling() {
        // Off-diagonal coupling: no closed form, but the reduced state must
        // be a valid density and reduce to Gibbs as the coupling vanishes.
        let mut fm = DMatrix::<Complex64>::zeros(2, 2);
        fm[(0, 1)] = Complex64::new(1.0, 0.0);
        fm[(1, 0)] = Complex64::new(1.0, 0.0);
        let f = crate::operator::HermitianOperator::from_matrix(fm).unwrap();
        let sys = build_system(&[0.0, 1.0], CouplingSpec::Matrix(f)).unwrap();
        let bath = DiscretizedBath::from_modes(vec![BathMode {
            omega: 1.0,
            coupling_sq: 0.02,
            width: 1.0,
        }]);
        let out = fock_ed_reduced(&sys, &bath, &FockConfig::new(10, 1), 1.0).unwrap();
        assert_relative_eq!(out.rho.trace(), 1.0, epsilon = 1e-12);
        let gibbs = gibbs_state(sys.hamiltonian(), 1.0).unwrap();
        // weak coupling: close to, but measurably different from, bare Gibbs
        let dev = (out.rho.matrix() - gibbs.matrix())
            .iter()
            .fold(0.0f64, |a, z| a.max(z.norm()));
        assert!(dev < 0.05, "unexpectedly large deviation {dev}");
    }

    #[test]
    fn partial_trace_product_state() {
        let a = crate::fixtures::random_hermitian(3, 1.0, 5);
        let b = crate::fixtures::random_hermitian(4, 1.0, 6);
        let full = HermitianOperator::from_matrix(a.matrix().kronecker(b.matrix())).unwrap();
        let reduced = partial_trace(&full, &[3, 4], 0).unwrap();
        let expected = a.matrix().map(|z| z * Complex64::new(b.trace(), 0.0));
        let err = (reduced.matrix() - expected)
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()));
        assert!(err < 1e-12);
        // trace preserved
        assert_relative_eq!(reduced.trace(), full.trace(), epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_trivial_factor() {
        let a = crate::fixtures::random_hermitian(4, 1.0, 7);
        let reduced = partial_trace(&a, &[4, 1], 0).unwrap();
        let err = (reduced.matrix() - a.matrix())
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()));
        assert!(err < 1e-14);
    }

    #[test]
    fn partial_trace_against_brute_force() {
        // keep the middle factor of a 2⊗3⊗2 space and check against the
        // explicit index-summation
        let op = crate::fixtures::random_hermitian(12, 1.0, 8);
        let reduced = partial_trace(&op, &[2, 3, 2], 1).unwrap();
        let m = op.matrix();
        let mut brute = DMatrix::<Complex64>::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                for a in 0..2 {
                    for c in 0..2 {
                        let row = a * 6 + i * 2 + c;
                        let col = a * 6 + j * 2 + c;
                        brute[(i, j)] += m[(row, col)];
                    }
                }
            }
        }
        let err = (reduced.matrix() - brute)
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()));
        assert!(err < 1e-12);
    }

    #[test]
    fn partial_trace_dimension_check() {
        let op = HermitianOperator::identity(6);
        assert!(partial_trace(&op, &[2, 2], 0).is_err());
    }
}
