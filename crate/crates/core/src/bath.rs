//! Continuum spectral densities and their finite-mode surrogates.
//!
//! The bath enters the reduced state only through `J(ω)`; discretizing it
//! into bins with `c_k² = (2/π) J(ω_k) ω_k Δω_k` makes the discrete
//! reorganization energy `λ_disc = Σ_k c_k²/(2ω_k²)` a midpoint-rule
//! approximation of the continuum `λ = (1/π)∫ J(ω)/ω dω`. Units: ħ = k_B = 1
//! and unit oscillator masses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Spectral density families. Only the Ohmic-exponential form
/// `J(ω) = 2 g² ω e^{-ω/ω_c}` is implemented; the enum is the extension
/// point for structured baths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralFamily {
    OhmicExponential,
}

/// Continuum spectral density J(ω).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDensity {
    pub family: SpectralFamily,
    /// Dimensionless system-bath coupling strength.
    pub g: f64,
    /// Cutoff frequency.
    pub omega_c: f64,
}

impl SpectralDensity {
    pub fn ohmic(g: f64, omega_c: f64) -> Result<Self> {
        if g < 0.0 {
            return Err(Error::InvalidConfig(format!("coupling g must be >= 0, got {g}")));
        }
        if omega_c <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "cutoff omega_c must be > 0, got {omega_c}"
            )));
        }
        Ok(Self {
            family: SpectralFamily::OhmicExponential,
            g,
            omega_c,
        })
    }

    /// Evaluate J(ω) at `omega >= 0`.
    pub fn value(&self, omega: f64) -> Result<f64> {
        if omega < 0.0 {
            return Err(Error::NegativeFrequency(omega));
        }
        Ok(match self.family {
            SpectralFamily::OhmicExponential => {
                2.0 * self.g * self.g * omega * (-omega / self.omega_c).exp()
            }
        })
    }

    /// Reorganization energy `λ = (1/π) ∫_0^∞ J(ω)/ω dω` by adaptive
    /// quadrature (relative error 1e-10).
    pub fn reorganization_energy(&self) -> Result<f64> {
        if self.g == 0.0 {
            return Ok(0.0);
        }
        let me = *self;
        let v = quad::integrate_semi_infinite(
            move |w| {
                if w == 0.0 {
                    // J/ω has a finite ω → 0 limit for Ohmic densities.
                    match me.family {
                        SpectralFamily::OhmicExponential => 2.0 * me.g * me.g,
                    }
                } else {
                    me.value(w).unwrap_or(0.0) / w
                }
            },
            self.omega_c,
            1e-11,
        )?;
        Ok(v / std::f64::consts::PI)
    }
}

/// One discretized bath mode: frequency, squared coupling, and the bin width
/// it represents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathMode {
    pub omega: f64,
    pub coupling_sq: f64,
    pub width: f64,
}

impl BathMode {
    /// This mode's contribution `c²/(2ω²)` to the reorganization energy.
    pub fn lambda_contribution(&self) -> f64 {
        self.coupling_sq / (2.0 * self.omega * self.omega)
    }
}

/// A finite harmonic bath standing in for the continuum.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedBath {
    modes: Vec<BathMode>,
    lambda_disc: f64,
}

/// Binning schemes for [`discretize`]. Midpoints keep the rule away from the
/// ω = 0 endpoint for every family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningScheme {
    Midpoint,
}

/// Discretize `J` into `k` equal-width bins on `(0, omega_max]` with mode
/// weights `c_k² = (2/π) J(ω_k) ω_k Δω_k` at the bin midpoints.
pub fn discretize(
    j: &SpectralDensity,
    k: usize,
    omega_max: f64,
    scheme: BinningScheme,
) -> Result<DiscretizedBath> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one bath mode".into()));
    }
    if omega_max <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "omega_max must be > 0, got {omega_max}"
        )));
    }
    let BinningScheme::Midpoint = scheme;
    let width = omega_max / k as f64;
    let mut modes = Vec::with_capacity(k);
    for i in 0..k {
        let omega = (i as f64 + 0.5) * width;
        let coupling_sq = (2.0 / std::f64::consts::PI) * j.value(omega)? * omega * width;
        modes.push(BathMode {
            omega,
            coupling_sq,
            width,
        });
    }
    Ok(DiscretizedBath::from_modes(modes))
}

impl DiscretizedBath {
    /// Assemble from explicit modes; frequencies must be strictly increasing
    /// and positive.
    pub fn from_modes(modes: Vec<BathMode>) -> Self {
        debug_assert!(modes.windows(2).all(|w| w[0].omega < w[1].omega));
        debug_assert!(modes.iter().all(|m| m.omega > 0.0 && m.coupling_sq >= 0.0));
        let lambda_disc = modes.iter().map(BathMode::lambda_contribution).sum();
        Self { modes, lambda_disc }
    }

    pub fn modes(&self) -> &[BathMode] {
        &self.modes
    }

    /// The stored discretized reorganization energy `Σ_k c_k²/(2ω_k²)`.
    pub fn lambda_disc(&self) -> f64 {
        self.lambda_disc
    }

    /// Recompute the mode sum from scratch (consistency check for the stored
    /// value).
    pub fn recompute_lambda(&self) -> f64 {
        self.modes.iter().map(BathMode::lambda_contribution).sum()
    }

    /// Collapse the bath into `k_used` effective modes by grouping contiguous
    /// bins. Each group keeps its reorganization-energy contribution exactly
    /// (`c_eff² = 2 ω_eff² λ_group`) and sits at the group's λ-weighted mean
    /// frequency, so `lambda_disc` is preserved while the mode count drops to
    /// something a truncated-Fock diagonalization can afford.
    pub fn coarsen(&self, k_used: usize) -> Result<DiscretizedBath> {
        if k_used == 0 {
            return Err(Error::InvalidConfig("k_used must be >= 1".into()));
        }
        if k_used >= self.modes.len() {
            return Ok(self.clone());
        }
        let k = self.modes.len();
        let base = k / k_used;
        let extra = k % k_used;
        let mut out = Vec::with_capacity(k_used);
        let mut start = 0usize;
        for gi in 0..k_used {
            let len = base + usize::from(gi < extra);
            let group = &self.modes[start..start + len];
            start += len;
            let lambda_g: f64 = group.iter().map(BathMode::lambda_contribution).sum();
            let width: f64 = group.iter().map(|m| m.width).sum();
            let omega_eff = if lambda_g > 0.0 {
                group
                    .iter()
                    .map(|m| m.lambda_contribution() * m.omega)
                    .sum::<f64>()
                    / lambda_g
            } else {
                // zero-coupling group: keep the midpoint frequency
                0.5 * (group[0].omega + group[len - 1].omega)
            };
            out.push(BathMode {
                omega: omega_eff,
                coupling_sq: 2.0 * omega_eff * omega_eff * lambda_g,
                width,
            });
        }
        Ok(DiscretizedBath::from_modes(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn spectral_density_zero_coupling() {
        let j = SpectralDensity::ohmic(0.0, 1.0).unwrap();
        assert_eq!(j.value(3.7).unwrap(), 0.0);
    }

    #[test]
    fn spectral_density_point_value() {
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        assert_relative_eq!(j.value(1.0).unwrap(), 2.0 * (-1.0f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(j.value(1.0).unwrap(), 0.7357588823428847, epsilon = 1e-12);
    }

    #[test]
    fn spectral_density_linear_at_low_frequency() {
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        let w = 1e-9;
        assert_relative_eq!(j.value(w).unwrap(), 2.0 * w, max_relative = 1e-6);
    }

    #[test]
    fn spectral_density_rejects_negative_frequency() {
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        assert!(j.value(-0.1).is_err());
    }

    #[test]
    fn reorganization_energy_matches_closed_form() {
        // (1/π) ∫ 2 g² e^{-ω/ω_c} dω = 2 g² ω_c / π
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        assert_relative_eq!(
            j.reorganization_energy().unwrap(),
            2.0 / PI,
            max_relative = 1e-10
        );
        let j = SpectralDensity::ohmic(0.5, 1.0).unwrap();
        assert_relative_eq!(
            j.reorganization_energy().unwrap(),
            0.5 / PI,
            max_relative = 1e-10
        );
        let j = SpectralDensity::ohmic(0.7, 2.3).unwrap();
        assert_relative_eq!(
            j.reorganization_energy().unwrap(),
            2.0 * 0.49 * 2.3 / PI,
            max_relative = 1e-10
        );
    }

    #[test]
    fn reorganization_energy_scales_as_g_squared() {
        let base = SpectralDensity::ohmic(1.0, 1.0)
            .unwrap()
            .reorganization_energy()
            .unwrap();
        for &g in &[0.25, 0.5, 1.5, 2.0] {
            let lam = SpectralDensity::ohmic(g, 1.0)
                .unwrap()
                .reorganization_energy()
                .unwrap();
            assert_relative_eq!(lam, g * g * base, max_relative = 1e-13);
        }
    }

    #[test]
    fn discretize_single_bin() {
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        let bath = discretize(&j, 1, 2.0, BinningScheme::Midpoint).unwrap();
        assert_eq!(bath.modes().len(), 1);
        let m = bath.modes()[0];
        assert_relative_eq!(m.omega, 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            m.coupling_sq,
            (2.0 / PI) * j.value(1.0).unwrap() * 1.0 * 2.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn discretize_zero_coupling() {
        let j = SpectralDensity::ohmic(0.0, 1.0).unwrap();
        let bath = discretize(&j, 16, 8.0, BinningScheme::Midpoint).unwrap();
        assert!(bath.modes().iter().all(|m| m.coupling_sq == 0.0));
        assert_eq!(bath.lambda_disc(), 0.0);
    }

    #[test]
    fn lambda_disc_tracks_continuum() {
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        let bath = discretize(&j, 200, 8.0, BinningScheme::Midpoint).unwrap();
        let cont = j.reorganization_energy().unwrap();
        assert!(
            ((bath.lambda_disc() - cont) / cont).abs() < 0.01,
            "lambda_disc {} vs continuum {}",
            bath.lambda_disc(),
            cont
        );
        assert_relative_eq!(bath.lambda_disc(), bath.recompute_lambda(), epsilon = 1e-15);
    }

    #[test]
    fn lambda_disc_monotone_in_omega_max() {
        let j = SpectralDensity::ohmic(1.0, 1.0).unwrap();
        let width = 0.05;
        let mut last = 0.0;
        for steps in [20usize, 60, 120, 200] {
            let bath = discretize(&j, steps, width * steps as f64, BinningScheme::Midpoint)
                .unwrap();
            assert!(bath.lambda_disc() >= last);
            last = bath.lambda_disc();
        }
    }

    #[test]
    fn single_mode_lambda_arithmetic() {
        let bath = DiscretizedBath::from_modes(vec![BathMode {
            omega: 1.0,
            coupling_sq: 2.0,
            width: 1.0,
        }]);
        assert_relative_eq!(bath.lambda_disc(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn coarsen_preserves_lambda() {
        let j = SpectralDensity::ohmic(0.8, 1.0).unwrap();
        let bath = discretize(&j, 200, 8.0, BinningScheme::Midpoint).unwrap();
        for k_used in [1usize, 2, 3, 5] {
            let coarse = bath.coarsen(k_used).unwrap();
            assert_eq!(coarse.modes().len(), k_used);
            assert_relative_eq!(
                coarse.lambda_disc(),
                bath.lambda_disc(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn coarsen_noop_when_small() {
        let j = SpectralDensity::ohmic(0.8, 1.0).unwrap();
        let bath = discretize(&j, 3, 8.0, BinningScheme::Midpoint).unwrap();
        let same = bath.coarsen(5).unwrap();
        assert_eq!(same.modes().len(), 3);
    }
}
