//! The finite-dimensional system: level energies, coupling operator, and the
//! commutation structure that selects the fast sampling path.

use crate::error::{Error, Result};
use crate::operator::HermitianOperator;

/// Relative tolerance on the commutator norm below which the system counts as
/// commuting (quantum-nondemolition sector).
pub const COMMUTATOR_TOL: f64 = 1e-12;

/// How to build the coupling operator `f`.
#[derive(Debug, Clone)]
pub enum CouplingSpec {
    /// Rank-1 projector |level><level|.
    Projector(usize),
    /// An explicit Hermitian matrix.
    Matrix(HermitianOperator),
}

/// System Hamiltonian plus the operator it couples to the bath through.
#[derive(Debug, Clone)]
pub struct SystemModel {
    hamiltonian: HermitianOperator,
    coupling: HermitianOperator,
    commuting: bool,
}

impl SystemModel {
    /// Build from an arbitrary Hamiltonian/coupling pair; the commuting flag
    /// is computed from the Hilbert-Schmidt norm of the commutator.
    pub fn new(hamiltonian: HermitianOperator, coupling: HermitianOperator) -> Result<Self> {
        hamiltonian.check_dim(&coupling)?;
        let comm = (hamiltonian.matrix() * coupling.matrix())
            - (coupling.matrix() * hamiltonian.matrix());
        let comm_norm = comm.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let scale = hamiltonian.hs_norm() * coupling.hs_norm();
        let commuting = comm_norm <= COMMUTATOR_TOL * scale.max(1e-300) || scale == 0.0;
        Ok(Self {
            hamiltonian,
            coupling,
            commuting,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.hamiltonian
    }

    pub fn coupling(&self) -> &HermitianOperator {
        &self.coupling
    }

    /// `f²`, the operator whose coefficient the bath renormalizes.
    pub fn coupling_squared(&self) -> HermitianOperator {
        self.coupling.squared()
    }

    /// True iff [H, f] = 0 within tolerance.
    pub fn is_commuting(&self) -> bool {
        self.commuting
    }

    /// Real diagonal of the Hamiltonian (the level energies when H is
    /// diagonal, which is how [`build_system`] constructs it).
    pub fn level_energies(&self) -> Vec<f64> {
        self.hamiltonian.diagonal_re()
    }

    /// True when both H and f are diagonal in the computational basis, which
    /// unlocks the elementwise slice-product tier.
    pub fn is_diagonal_pair(&self) -> bool {
        self.hamiltonian.is_diagonal(0.0) && self.coupling.is_diagonal(0.0)
    }

    /// Same system with the static counterterm `+λ f²` folded into H.
    pub fn with_counterterm(&self, lambda: f64) -> Result<Self> {
        let h = self.hamiltonian.add(&self.coupling_squared().scaled(lambda))?;
        Self::new(h, self.coupling.clone())
    }
}

/// Build a diagonal system Hamiltonian from level energies together with its
/// bath coupling operator.
pub fn build_system(energies: &[f64], coupling: CouplingSpec) -> Result<SystemModel> {
    if energies.is_empty() {
        return Err(Error::InvalidConfig("energies must be non-empty".into()));
    }
    let d = energies.len();
    let hamiltonian = HermitianOperator::from_real_diagonal(energies);
    let coupling = match coupling {
        CouplingSpec::Projector(level) => HermitianOperator::projector(d, level)?,
        CouplingSpec::Matrix(m) => {
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.dim(),
                });
            }
            m
        }
    };
    SystemModel::new(hamiltonian, coupling)
}

/// The five-level benchmark system coupled through the projector on its top
/// level. The spacings are a fixed, configurable artifact default.
pub fn default_five_level() -> SystemModel {
    build_system(
        &[0.0, 0.35, 0.90, 1.70, 2.30],
        CouplingSpec::Projector(4),
    )
    .expect("default system is valid")
}
