//! Dense Hermitian operators and the matrix functions built on their spectral
//! decomposition.
//!
//! Everything downstream (Gibbs states, quenched propagators, the mean-force
//! extraction) reduces to `V f(Λ) V†` on operators of modest dimension, so the
//! matrix functions here use a full symmetric eigendecomposition rather than
//! series methods. After every matrix function the result is symmetrized
//! `(M + M†)/2`; drift beyond [`HERM_DRIFT_TOL`] is reported as an error
//! instead of being silently repaired.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance for accepting a matrix as Hermitian on construction.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Relative drift budget for matrix-function output before symmetrization.
pub const HERM_DRIFT_TOL: f64 = 1e-10;

/// A dense self-adjoint matrix on a finite-dimensional Hilbert space.
///
/// Energies are dimensionless (ħ = k_B = 1). The wrapped matrix is validated
/// (or explicitly symmetrized) on construction and never mutated afterwards,
/// so values are safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: DMatrix<Complex64>,
}

/// Largest absolute entry of a complex matrix.
pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Max-norm deviation from self-adjointness.
pub(crate) fn hermiticity_drift(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut drift = 0.0f64;
    for i in 0..n {
        for j in i..n {
            drift = drift.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    drift
}

fn symmetrized(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

impl HermitianOperator {
    /// Wrap a matrix, checking conjugate-transpose symmetry against
    /// [`HERMITICITY_TOL`] relative to the largest entry.
    pub fn from_matrix(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows().max(1),
                found: entries.ncols(),
            });
        }
        let drift = hermiticity_drift(&entries);
        let scale = max_abs(&entries);
        let tol = HERMITICITY_TOL * scale.max(1.0e-300);
        if scale > 0.0 && drift > tol {
            return Err(Error::NotHermitian { drift, tol });
        }
        Ok(Self {
            entries: symmetrized(&entries),
        })
    }

    /// Wrap a matrix-function result: error if the drift exceeds the repair
    /// budget, otherwise symmetrize.
    pub(crate) fn from_matrix_repair(entries: DMatrix<Complex64>) -> Result<Self> {
        let drift = hermiticity_drift(&entries);
        let scale = max_abs(&entries).max(1.0e-300);
        let tol = HERM_DRIFT_TOL * scale;
        if drift > tol {
            return Err(Error::HermiticityDrift { drift, tol });
        }
        Ok(Self {
            entries: symmetrized(&entries),
        })
    }

    /// Diagonal operator with the given real entries.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let mut m = DMatrix::zeros(d, d);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        Self { entries: m }
    }

    /// Dense Hermitian matrix from a real symmetric one.
    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::from_matrix(m.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: DMatrix::zeros(dim, dim),
        }
    }

    /// Rank-1 projector |i><i|.
    pub fn projector(dim: usize, level: usize) -> Result<Self> {
        if level >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: level,
            });
        }
        let mut m = DMatrix::zeros(dim, dim);
        m[(level, level)] = Complex64::new(1.0, 0.0);
        Ok(Self { entries: m })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.entries
    }

    /// Real part of the trace (the imaginary part is zero for Hermitian
    /// operators up to roundoff).
    pub fn trace(&self) -> f64 {
        self.entries.trace().re
    }

    /// Hilbert-Schmidt norm sqrt(Tr M†M).
    pub fn hs_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_entry(&self) -> f64 {
        max_abs(&self.entries)
    }

    /// Real diagonal as a vector.
    pub fn diagonal_re(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).collect()
    }

    /// True when every off-diagonal entry is below `tol` times the largest
    /// entry (an exactly diagonal matrix passes for any tol >= 0).
    pub fn is_diagonal(&self, tol: f64) -> bool {
        let scale = self.max_abs_entry().max(1e-300);
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.entries[(i, j)].norm() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Eigendecomposition of the Hermitian matrix: real eigenvalues and a
    /// unitary of eigenvectors (columns), unsorted.
    pub fn eigh(&self) -> Result<(DVector<f64>, DMatrix<Complex64>)> {
        eigh_raw(&self.entries)
    }

    /// `V f(Λ) V†` followed by the drift check and symmetrization.
    pub fn map_spectrum<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self> {
        let (vals, vecs) = self.eigh()?;
        let mut scaled = vecs.clone();
        for (j, &lambda) in vals.iter().enumerate() {
            let w = Complex64::new(f(lambda), 0.0);
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= w;
            }
        }
        let out = &scaled * vecs.adjoint();
        Self::from_matrix_repair(out)
    }

    /// A + B.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            entries: &self.entries + &other.entries,
        })
    }

    /// A - B.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            entries: &self.entries - &other.entries,
        })
    }

    /// c * A for real c.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: self.entries.scale(c),
        }
    }

    /// A + c * I.
    pub fn shifted(&self, c: f64) -> Self {
        let mut entries = self.entries.clone();
        for i in 0..self.dim() {
            entries[(i, i)] += Complex64::new(c, 0.0);
        }
        Self { entries }
    }

    /// A * A (Hermitian for Hermitian A).
    pub fn squared(&self) -> Self {
        Self {
            entries: symmetrized(&(&self.entries * &self.entries)),
        }
    }

    pub(crate) fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

/// Eigendecomposition of a Hermitian matrix given as a raw complex matrix.
pub(crate) fn eigh_raw(m: &DMatrix<Complex64>) -> Result<(DVector<f64>, DMatrix<Complex64>)> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000).ok_or(Error::EigenFailed)?;
    Ok((eig.eigenvalues, eig.eigenvectors))
}

/// `e^{sH}` for Hermitian `H` via spectral decomposition. The result is
/// Hermitian positive definite.
pub fn herm_expm(h: &HermitianOperator, s: f64) -> Result<HermitianOperator> {
    h.map_spectrum(|lambda| (s * lambda).exp())
}

/// Raw `e^{sM}` for a Hermitian matrix without the wrapper checks; used in
/// the per-slice hot loop of the quenched propagator.
pub(crate) fn expm_raw(m: &DMatrix<Complex64>, s: f64) -> Result<DMatrix<Complex64>> {
    let (vals, vecs) = eigh_raw(m)?;
    let mut scaled = vecs.clone();
    for (j, &lambda) in vals.iter().enumerate() {
        let w = Complex64::new((s * lambda).exp(), 0.0);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= w;
        }
    }
    Ok(&scaled * vecs.adjoint())
}

/// Principal Hermitian logarithm. Fails with [`Error::Positivity`] when the
/// spectrum is not strictly positive, carrying the smallest eigenvalue.
pub fn herm_logm(rho: &HermitianOperator) -> Result<HermitianOperator> {
    let (vals, vecs) = rho.eigh()?;
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::Positivity {
            min_eigenvalue: min,
        });
    }
    let mut scaled = vecs.clone();
    for (j, &lambda) in vals.iter().enumerate() {
        let w = Complex64::new(lambda.ln(), 0.0);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= w;
        }
    }
    HermitianOperator::from_matrix_repair(&scaled * vecs.adjoint())
}

/// Hilbert-Schmidt inner product Tr(A†B).
pub fn hs_inner(a: &HermitianOperator, b: &HermitianOperator) -> Result<Complex64> {
    a.check_dim(b)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, y) in a.matrix().iter().zip(b.matrix().iter()) {
        acc += x.conj() * y;
    }
    Ok(acc)
}

/// Normalized thermal state `e^{-βH} / Tr e^{-βH}` with its log partition
/// function. The spectrum is shifted by its minimum before exponentiating so
/// large β cannot overflow; the shift is reapplied in the returned ln Z.
pub fn gibbs_state_with_log_z(h: &HermitianOperator, beta: f64) -> Result<(HermitianOperator, f64)> {
    if beta <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "inverse temperature must be positive, got {beta}"
        )));
    }
    let (vals, vecs) = h.eigh()?;
    let e0 = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = vals.iter().map(|&e| (-beta * (e - e0)).exp()).collect();
    let z_shifted: f64 = weights.iter().sum();
    let mut scaled = vecs.clone();
    for (j, &w) in weights.iter().enumerate() {
        let c = Complex64::new(w / z_shifted, 0.0);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= c;
        }
    }
    let rho = HermitianOperator::from_matrix_repair(&scaled * vecs.adjoint())?;
    Ok((rho, z_shifted.ln() - beta * e0))
}

/// Normalized thermal state `e^{-βH} / Tr e^{-βH}`.
pub fn gibbs_state(h: &HermitianOperator, beta: f64) -> Result<HermitianOperator> {
    gibbs_state_with_log_z(h, beta).map(|(rho, _)| rho)
}
