//! Monte Carlo accumulation of the quenched density, mean-force extraction
//! through the Hermitian logarithm, operator-basis fitting, and level-shift
//! diagnostics — plus the analytic commuting-sector reference.
//!
//! Accumulation is a commutative monoid: workers own private
//! [`DensityEstimate`] values which are merged in batch-index order at the
//! end, so results are bitwise identical for any worker count.
//!
//! Error bars are elementwise standard errors propagated to first order
//! through normalization and through the matrix logarithm (via its Fréchet
//! derivative in the eigenbasis); the covariance of the diagonal entries is
//! tracked exactly because populations, level shifts, and the basis fit all
//! live on the diagonal in the commuting benchmark.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{antithetic_pair, sample_path, stream_rng, NoiseFactor};
use crate::operator::{gibbs_state, herm_logm, hs_inner, HermitianOperator};
use crate::quench::{hermitize, sampling_propagator, QuenchedSample};
use crate::system::SystemModel;

/// A contiguous range of ChaCha stream ids used by an estimate (compact form
/// of the per-sample stream list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StreamRange {
    pub start: u64,
    pub count: u64,
}

/// Running Monte Carlo state for the unnormalized reduced density.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    sum: DMatrix<Complex64>,
    /// Elementwise |U_ab|² accumulation.
    sum_sq: DMatrix<f64>,
    /// Re(U_aa)·Re(U_bb) accumulation: the diagonal second moments needed to
    /// propagate errors through normalization and gauge anchoring.
    diag_second: DMatrix<f64>,
    count: u64,
    seed_manifest: Vec<StreamRange>,
}

impl DensityEstimate {
    pub fn new(dim: usize) -> Self {
        Self {
            sum: DMatrix::zeros(dim, dim),
            sum_sq: DMatrix::zeros(dim, dim),
            diag_second: DMatrix::zeros(dim, dim),
            count: 0,
            seed_manifest: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.nrows()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn seed_manifest(&self) -> &[StreamRange] {
        &self.seed_manifest
    }

    /// Fold one sample in. Samples are expected to be hermitized so the
    /// diagonal is real.
    pub fn accumulate(&mut self, sample: &QuenchedSample) -> Result<()> {
        let d = self.dim();
        if sample.u.nrows() != d || sample.u.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: sample.u.nrows(),
            });
        }
        self.sum += &sample.u;
        for (dst, z) in self.sum_sq.iter_mut().zip(sample.u.iter()) {
            *dst += z.norm_sqr();
        }
        for a in 0..d {
            for b in 0..d {
                self.diag_second[(a, b)] += sample.u[(a, a)].re * sample.u[(b, b)].re;
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Record the stream ids that produced the samples folded so far.
    pub fn record_streams(&mut self, range: StreamRange) {
        if let Some(last) = self.seed_manifest.last_mut() {
            if last.start + last.count == range.start {
                last.count += range.count;
                return;
            }
        }
        self.seed_manifest.push(range);
    }

    /// Monoid merge: counts and sums add, manifests concatenate.
    pub fn merge(mut self, other: DensityEstimate) -> Result<DensityEstimate> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.diag_second += other.diag_second;
        self.count += other.count;
        for r in other.seed_manifest {
            self.record_streams(r);
        }
        Ok(self)
    }
}

/// The normalized mean density with its first-order error model.
#[derive(Debug, Clone)]
pub struct MeanDensity {
    /// Unit-trace hermitized sample mean.
    pub rho: HermitianOperator,
    /// Hermitized sample mean before normalization.
    pub raw_mean: DMatrix<Complex64>,
    /// Elementwise standard error of `raw_mean` (total over re/im).
    pub stderr: DMatrix<f64>,
    /// Covariance of the diagonal of `raw_mean`.
    pub diag_cov: DMatrix<f64>,
    pub count: u64,
}

/// Normalize the accumulated sums into a state estimate.
pub fn mean_density(est: &DensityEstimate) -> Result<MeanDensity> {
    if est.count < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            have: est.count,
        });
    }
    let n = est.count as f64;
    let mean = est.sum.map(|z| z / n);
    let raw_mean = (&mean + mean.adjoint()).scale(0.5);
    let d = est.dim();
    let mut stderr = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let var = (est.sum_sq[(a, b)] / n - mean[(a, b)].norm_sqr()).max(0.0);
            stderr[(a, b)] = (var / (n - 1.0)).sqrt();
        }
    }
    let mut diag_cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            diag_cov[(a, b)] =
                (est.diag_second[(a, b)] / n - raw_mean[(a, a)].re * raw_mean[(b, b)].re)
                    / (n - 1.0);
        }
    }
    let trace = raw_mean.trace().re;
    if trace <= 0.0 {
        return Err(Error::Positivity {
            min_eigenvalue: trace,
        });
    }
    let rho = HermitianOperator::from_matrix_repair(raw_mean.map(|z| z / trace))?;
    Ok(MeanDensity {
        rho,
        raw_mean,
        stderr,
        diag_cov,
        count: est.count,
    })
}

impl MeanDensity {
    /// Diagonal populations of the normalized state.
    pub fn populations(&self) -> Vec<f64> {
        self.rho.diagonal_re()
    }

    /// First-order standard errors of the populations, including the
    /// covariance with the trace introduced by normalization.
    pub fn population_stderr(&self) -> Vec<f64> {
        let d = self.rho.dim();
        let t: f64 = self.raw_mean.trace().re;
        let p = self.populations();
        let row_sums: Vec<f64> = (0..d).map(|a| self.diag_cov.row(a).sum()).collect();
        let total: f64 = row_sums.iter().sum();
        (0..d)
            .map(|a| {
                let var = (self.diag_cov[(a, a)] - 2.0 * p[a] * row_sums[a]
                    + p[a] * p[a] * total)
                    / (t * t);
                var.max(0.0).sqrt()
            })
            .collect()
    }
}

/// Closed-form reduced state of a commuting system: populations
/// `∝ e^{-β(E_n - λ f_n²)}`, i.e. the Gibbs state of `H - λ f²`.
pub fn analytic_reduced(sys: &SystemModel, lambda: f64, beta: f64) -> Result<HermitianOperator> {
    if !sys.is_commuting() {
        return Err(Error::ContractViolation(
            "analytic_reduced requires a commuting system".into(),
        ));
    }
    let h_eff = sys
        .hamiltonian()
        .sub(&sys.coupling_squared().scaled(lambda))?;
    gibbs_state(&h_eff, beta)
}

/// Additive-scalar gauge for the extracted mean-force Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gauge {
    /// Shift so that entry (0,0) equals the given bare energy: on the
    /// benchmark the coupling annihilates level 0, so its shift must vanish.
    AnchorLevel0 { target: f64 },
    /// Subtract the mean of the diagonal.
    Traceless,
}

/// Mean-force Hamiltonian `-(1/β) log ρ` with the additive scalar fixed by
/// the chosen gauge.
pub fn extract_hmf(rho: &HermitianOperator, beta: f64, gauge: Gauge) -> Result<HermitianOperator> {
    let h_raw = herm_logm(rho)?.scaled(-1.0 / beta);
    Ok(apply_gauge(&h_raw, gauge))
}

fn apply_gauge(h: &HermitianOperator, gauge: Gauge) -> HermitianOperator {
    match gauge {
        Gauge::AnchorLevel0 { target } => {
            let shift = target - h.matrix()[(0, 0)].re;
            h.shifted(shift)
        }
        Gauge::Traceless => h.shifted(-h.trace() / h.dim() as f64),
    }
}

/// Extracted mean-force Hamiltonian with first-order error model.
#[derive(Debug, Clone)]
pub struct HmfWithErrors {
    pub h: HermitianOperator,
    /// Var(H_ab) elementwise after gauge fixing (total over re/im).
    pub var_entries: DMatrix<f64>,
    /// Covariance of the gauged diagonal entries.
    pub diag_cov: DMatrix<f64>,
}

/// Log-derivative divided differences Φ_ij = (ln λ_i - ln λ_j)/(λ_i - λ_j).
fn log_divided_differences(vals: &DVector<f64>) -> DMatrix<f64> {
    let d = vals.len();
    let scale = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut phi = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let (li, lj) = (vals[i], vals[j]);
            phi[(i, j)] = if (li - lj).abs() <= 1e-12 * scale {
                2.0 / (li + lj)
            } else {
                (li.ln() - lj.ln()) / (li - lj)
            };
        }
    }
    phi
}

/// Extract the mean-force Hamiltonian from a Monte Carlo density and
/// propagate the sampling errors through the logarithm.
///
/// Because a scalar rescaling of ρ only moves the (gauge-removed) additive
/// constant, all errors can be propagated from the *unnormalized* mean and
/// its covariances, which is what the accumulators track directly.
pub fn extract_hmf_with_errors(
    md: &MeanDensity,
    beta: f64,
    gauge: Gauge,
) -> Result<HmfWithErrors> {
    let h = extract_hmf(&md.rho, beta, gauge)?;
    let d = md.rho.dim();

    let raw = HermitianOperator::from_matrix_repair(md.raw_mean.clone())?;
    let (vals, vecs) = raw.eigh()?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::Positivity {
            min_eigenvalue: min,
        });
    }
    let phi = log_divided_differences(&vals);

    // Fréchet derivative of log at the raw mean, as the 4-index map
    // T[(a,b),(c,d)] with dH_ab = -(1/β) Σ_cd T dR_cd.
    let idx = |a: usize, b: usize| a * d + b;
    let mut t = vec![Complex64::new(0.0, 0.0); d * d * d * d];
    // r[(b,d,i)] = Σ_j Φ_ij V_dj conj(V_bj)
    let mut r = vec![Complex64::new(0.0, 0.0); d * d * d];
    for b in 0..d {
        for dd in 0..d {
            for i in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..d {
                    acc += phi[(i, j)] * vecs[(dd, j)] * vecs[(b, j)].conj();
                }
                r[(b * d + dd) * d + i] = acc;
            }
        }
    }
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for dd in 0..d {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..d {
                        acc += vecs[(a, i)] * vecs[(c, i)].conj() * r[(b * d + dd) * d + i];
                    }
                    t[idx(a, b) * d * d + idx(c, dd)] = acc;
                }
            }
        }
    }

    // Gauge-corrected map for diagonal outputs.
    let t_at = |a: usize, b: usize, c: usize, dd: usize| t[idx(a, b) * d * d + idx(c, dd)];
    let t_diag = |a: usize, c: usize, dd: usize| -> Complex64 {
        match gauge {
            Gauge::AnchorLevel0 { .. } => t_at(a, a, c, dd) - t_at(0, 0, c, dd),
            Gauge::Traceless => {
                let mut mean = Complex64::new(0.0, 0.0);
                for k in 0..d {
                    mean += t_at(k, k, c, dd);
                }
                t_at(a, a, c, dd) - mean / d as f64
            }
        }
    };

    let inv_beta_sq = 1.0 / (beta * beta);
    let var_r = |c: usize, dd: usize| {
        let s = md.stderr[(c, dd)];
        s * s
    };

    let mut diag_cov = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let mut acc = 0.0;
            for c in 0..d {
                for dd in 0..d {
                    acc += (t_diag(a, c, c) * t_diag(b, dd, dd).conj()).re * md.diag_cov[(c, dd)];
                }
            }
            for c in 0..d {
                for dd in (c + 1)..d {
                    acc += (t_diag(a, c, dd) * t_diag(b, c, dd).conj()
                        + t_diag(a, dd, c) * t_diag(b, dd, c).conj())
                    .re
                        * var_r(c, dd);
                }
            }
            diag_cov[(a, b)] = acc * inv_beta_sq;
        }
    }

    let mut var_entries = DMatrix::zeros(d, d);
    for a in 0..d {
        var_entries[(a, a)] = diag_cov[(a, a)].max(0.0);
    }
    for a in 0..d {
        for b in 0..d {
            if a == b {
                continue;
            }
            let mut acc = 0.0;
            for c in 0..d {
                for dd in 0..d {
                    acc += (t_at(a, b, c, c) * t_at(a, b, dd, dd).conj()).re
                        * md.diag_cov[(c, dd)];
                }
            }
            for c in 0..d {
                for dd in (c + 1)..d {
                    acc += (t_at(a, b, c, dd).norm_sqr() + t_at(a, b, dd, c).norm_sqr())
                        * var_r(c, dd);
                }
            }
            var_entries[(a, b)] = acc.max(0.0) * inv_beta_sq;
        }
    }

    Ok(HmfWithErrors {
        h,
        var_entries,
        diag_cov,
    })
}

/// Fitted coefficients of the mean-force Hamiltonian in the operator basis
/// {𝕀, H_S, f²}.
#[derive(Debug, Clone, Copy)]
pub struct HmfFit {
    /// Identity coefficient (energy units); absorbs the gauge scalar.
    pub c0: f64,
    /// Bare-Hamiltonian coefficient (dimensionless).
    pub a_h: f64,
    /// Coefficient of f² (energy units); the bath renormalization.
    pub a_p: f64,
    /// Hilbert-Schmidt norm of the unfitted remainder.
    pub residual: f64,
    /// Hilbert-Schmidt norm of the off-diagonal part in the system basis.
    pub offdiag_norm: f64,
}

/// Standard errors for the fitted coefficients and the null band for the
/// off-diagonal norm.
#[derive(Debug, Clone, Copy)]
pub struct FitErrors {
    pub c0_err: f64,
    pub a_h_err: f64,
    pub a_p_err: f64,
    /// Expected value of offdiag_norm² under the zero-coherence null.
    pub offdiag_sq_null_mean: f64,
    /// Standard deviation of offdiag_norm² under the null.
    pub offdiag_sq_null_sd: f64,
}

fn fit_ops(sys: &SystemModel) -> [HermitianOperator; 3] {
    [
        HermitianOperator::identity(sys.dim()),
        sys.hamiltonian().clone(),
        sys.coupling_squared(),
    ]
}

fn gram_solve(ops: &[HermitianOperator; 3], h: &HermitianOperator) -> Result<Vector3<f64>> {
    let mut g = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g[(i, j)] = hs_inner(&ops[i], &ops[j])?.re;
        }
        b[i] = hs_inner(&ops[i], h)?.re;
    }
    let scale = g.norm();
    let lu = g.full_piv_lu();
    let det = lu.determinant();
    if det.abs() <= 1e-12 * scale.powi(3).max(1e-300) {
        return Err(Error::SingularBasis);
    }
    lu.solve(&b).ok_or(Error::SingularBasis)
}

/// Least-squares fit of `H ≈ c0·𝕀 + a_h·H_S + a_p·f²` in the
/// Hilbert-Schmidt inner product (Gram-matrix solve).
pub fn fit_basis(h: &HermitianOperator, sys: &SystemModel) -> Result<HmfFit> {
    let ops = fit_ops(sys);
    let a = gram_solve(&ops, h)?;
    let mut rem = h.matrix().clone();
    for (coeff, op) in a.iter().zip(ops.iter()) {
        rem -= op.matrix().map(|z| z * Complex64::new(*coeff, 0.0));
    }
    let residual = rem.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let d = h.dim();
    let mut off = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                off += h.matrix()[(i, j)].norm_sqr();
            }
        }
    }
    Ok(HmfFit {
        c0: a[0],
        a_h: a[1],
        a_p: a[2],
        residual,
        offdiag_norm: off.sqrt(),
    })
}

/// [`fit_basis`] plus coefficient errors mapped through the Gram solve.
pub fn fit_basis_with_errors(hwe: &HmfWithErrors, sys: &SystemModel) -> Result<(HmfFit, FitErrors)> {
    let fit = fit_basis(&hwe.h, sys)?;
    let ops = fit_ops(sys);
    let d = hwe.h.dim();

    // Cov(b_i, b_j) from the H error model: diagonal entries carry their full
    // covariance, off-diagonal (conjugate) pairs are treated as independent.
    let mut cov_b = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = 0.0;
            for a in 0..d {
                for b in 0..d {
                    acc += ops[i].matrix()[(a, a)].re
                        * ops[j].matrix()[(b, b)].re
                        * hwe.diag_cov[(a, b)];
                }
            }
            for a in 0..d {
                for b in (a + 1)..d {
                    let bi = ops[i].matrix()[(a, b)];
                    let bj = ops[j].matrix()[(a, b)];
                    acc += 2.0 * (bi.conj() * bj).re * hwe.var_entries[(a, b)];
                }
            }
            cov_b[(i, j)] = acc;
        }
    }

    let mut g = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g[(i, j)] = hs_inner(&ops[i], &ops[j])?.re;
        }
    }
    let ginv = g.try_inverse().ok_or(Error::SingularBasis)?;
    let cov_a = ginv * cov_b * ginv.transpose();

    let mut null_mean = 0.0;
    let mut null_var = 0.0;
    for a in 0..d {
        for b in (a + 1)..d {
            let v = hwe.var_entries[(a, b)];
            null_mean += 2.0 * v;
            null_var += 4.0 * v * v;
        }
    }

    Ok((
        fit,
        FitErrors {
            c0_err: cov_a[(0, 0)].max(0.0).sqrt(),
            a_h_err: cov_a[(1, 1)].max(0.0).sqrt(),
            a_p_err: cov_a[(2, 2)].max(0.0).sqrt(),
            offdiag_sq_null_mean: null_mean,
            offdiag_sq_null_sd: null_var.sqrt(),
        },
    ))
}

/// Per-level shifts Δ_i = (H_MF - H)_ii in the system eigenbasis.
pub fn level_shifts(h_mf: &HermitianOperator, sys: &SystemModel) -> Result<Vec<f64>> {
    h_mf.check_dim(sys.hamiltonian())?;
    Ok(h_mf
        .diagonal_re()
        .iter()
        .zip(sys.level_energies().iter())
        .map(|(h, e)| h - e)
        .collect())
}

/// Standard errors of the level shifts (the bare energies are exact inputs).
pub fn level_shift_errors(hwe: &HmfWithErrors) -> Vec<f64> {
    (0..hwe.h.dim())
        .map(|a| hwe.diag_cov[(a, a)].max(0.0).sqrt())
        .collect()
}

/// Bath-induced reorganization scale estimated from population ratios:
/// the mean over uncoupled levels j of
/// `(1/β)[ln(p_c/p_j) - ln(p_c^bare/p_j^bare)]`, with its standard error.
pub fn lambda_estimate(
    md: &MeanDensity,
    bare_populations: &[f64],
    beta: f64,
    coupled: usize,
) -> Result<(f64, f64)> {
    let d = md.rho.dim();
    if bare_populations.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bare_populations.len(),
        });
    }
    if d < 2 {
        return Err(Error::InvalidConfig(
            "lambda estimate needs at least two levels".into(),
        ));
    }
    let p = md.populations();
    let mut acc = 0.0;
    for j in 0..d {
        if j == coupled {
            continue;
        }
        acc += (p[coupled] / p[j]).ln() - (bare_populations[coupled] / bare_populations[j]).ln();
    }
    let m = (d - 1) as f64;
    let lam = acc / (beta * m);

    // Normalization cancels in the ratios, so the gradient acts on the raw
    // diagonal alone.
    let r: Vec<f64> = (0..d).map(|a| md.raw_mean[(a, a)].re).collect();
    let mut grad = vec![0.0f64; d];
    for (k, gk) in grad.iter_mut().enumerate() {
        *gk = if k == coupled {
            1.0 / (beta * r[k])
        } else {
            -1.0 / (beta * m * r[k])
        };
    }
    let mut var = 0.0;
    for a in 0..d {
        for b in 0..d {
            var += grad[a] * grad[b] * md.diag_cov[(a, b)];
        }
    }
    Ok((lam, var.max(0.0).sqrt()))
}

/// Plan for a reproducible sampling run. `samples` is the propagator
/// evaluation budget; with antithetic pairing each accumulated sample is the
/// average of a path and its sign flip, so `samples/2` independent samples
/// are recorded.
#[derive(Debug, Clone, Copy)]
pub struct SamplePlan {
    pub seed: u64,
    /// First stream id; path i uses stream `stream_base + i`.
    pub stream_base: u64,
    pub samples: u64,
    pub antithetic: bool,
    /// Paths per worker batch. Fixed batching (independent of the worker
    /// count) keeps the merged result bitwise deterministic.
    pub batch_size: u64,
}

impl SamplePlan {
    pub fn new(seed: u64, samples: u64, antithetic: bool) -> Self {
        Self {
            seed,
            stream_base: 0,
            samples,
            antithetic,
            batch_size: 1024,
        }
    }

    pub fn with_stream_base(mut self, base: u64) -> Self {
        self.stream_base = base;
        self
    }

    fn paths(&self) -> u64 {
        if self.antithetic {
            (self.samples / 2).max(1)
        } else {
            self.samples.max(1)
        }
    }
}

/// Result of a sampling run: the merged estimate plus the per-sample weights
/// Tr U used for the effective-sample-size diagnostic.
pub struct SampleRun {
    pub estimate: DensityEstimate,
    pub weights: Vec<f64>,
}

/// Run the Monte Carlo loop: draw paths on independent streams, propagate,
/// hermitize, accumulate. Batches run in parallel on the current rayon pool
/// and are merged in index order.
pub fn sample_density(
    sys: &SystemModel,
    factor: &NoiseFactor,
    plan: &SamplePlan,
) -> Result<SampleRun> {
    let paths = plan.paths();
    let batch = plan.batch_size.max(1);
    let batches = paths.div_ceil(batch);

    let worker = |bi: u64| -> Result<(DensityEstimate, Vec<f64>)> {
        let lo = bi * batch;
        let hi = ((bi + 1) * batch).min(paths);
        let mut est = DensityEstimate::new(sys.dim());
        let mut weights = Vec::with_capacity((hi - lo) as usize);
        for i in lo..hi {
            let mut rng = stream_rng(plan.seed, plan.stream_base + i);
            let path = sample_path(factor, &mut rng);
            let sample = if plan.antithetic {
                let s1 = sampling_propagator(sys, &path)?;
                let s2 = sampling_propagator(sys, &antithetic_pair(&path))?;
                QuenchedSample {
                    u: (s1.u + s2.u).scale(0.5),
                    x: s1.x,
                }
            } else {
                sampling_propagator(sys, &path)?
            };
            let sample = hermitize(sample);
            weights.push(sample.u.trace().re);
            est.accumulate(&sample)?;
        }
        est.record_streams(StreamRange {
            start: plan.stream_base + lo,
            count: hi - lo,
        });
        Ok((est, weights))
    };

    let parts: Vec<Result<(DensityEstimate, Vec<f64>)>> =
        (0..batches).into_par_iter().map(worker).collect();

    let mut merged = DensityEstimate::new(sys.dim());
    let mut weights = Vec::with_capacity(paths as usize);
    for part in parts {
        let (est, mut w) = part?;
        merged = merged.merge(est)?;
        weights.append(&mut w);
    }
    Ok(SampleRun {
        estimate: merged,
        weights,
    })
}

/// Share of the total (absolute) weight carried by the heaviest `frac` of
/// samples; values near 1 indicate a heavy-tailed estimator.
pub fn top_weight_share(weights: &[f64], frac: f64) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let mut w: Vec<f64> = weights.iter().map(|v| v.abs()).collect();
    w.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let k = ((w.len() as f64 * frac).ceil() as usize).max(1);
    w[..k].iter().sum::<f64>() / total
}
