//! Run configuration: a TOML file with every field defaulted, mirrored by
//! CLI flags (`--bath.g`, `--grid.beta`, ...).

use serde::{Deserialize, Serialize};

use crate::bath::{discretize, BinningScheme, DiscretizedBath, SpectralDensity};
use crate::error::{Error, Result};
use crate::kernel::TimeGrid;
use crate::system::{build_system, CouplingSpec, SystemModel};

fn default_energies() -> Vec<f64> {
    vec![0.0, 0.35, 0.90, 1.70, 2.30]
}
fn default_coupled_level() -> usize {
    4
}
fn default_g() -> f64 {
    1.0
}
fn default_omega_c() -> f64 {
    1.0
}
fn default_k() -> usize {
    200
}
fn default_omega_max() -> f64 {
    8.0
}
fn default_beta() -> f64 {
    2.0
}
fn default_n() -> usize {
    128
}
fn default_samples() -> u64 {
    100_000
}
fn default_seed() -> u64 {
    7011
}
fn default_true() -> bool {
    true
}
fn default_n_max() -> usize {
    8
}
fn default_k_used() -> usize {
    3
}
fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub energies: Vec<f64>,
    pub coupled_level: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            energies: default_energies(),
            coupled_level: default_coupled_level(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BathConfig {
    pub g: f64,
    pub omega_c: f64,
    /// Number of discretization bins for the stochastic machinery.
    pub k: usize,
    /// Upper edge of the discretized interval, in units of omega_c.
    pub omega_max: f64,
    /// Discretize over (0, omega_c] instead of (0, omega_max·omega_c].
    pub paper_interval: bool,
}

impl Default for BathConfig {
    fn default() -> Self {
        Self {
            g: default_g(),
            omega_c: default_omega_c(),
            k: default_k(),
            omega_max: default_omega_max(),
            paper_interval: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub beta: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            beta: default_beta(),
            n: default_n(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    /// Propagator evaluation budget per sweep point.
    pub samples: u64,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: default_seed(),
            antithetic: default_true(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EdConfig {
    pub n_max: usize,
    pub k_used: usize,
}

impl Default for EdConfig {
    fn default() -> Self {
        Self {
            n_max: default_n_max(),
            k_used: default_k_used(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format '{other}' (expected csv|json)")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output path; empty means stdout.
    pub path: String,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            path: String::new(),
            format: default_format(),
        }
    }
}

/// Full experiment configuration, with the artifact defaults.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub bath: BathConfig,
    pub grid: GridConfig,
    pub mc: McConfig,
    pub ed: EdConfig,
    /// Add the static counterterm +λ_disc f² to the system Hamiltonian.
    pub counterterm: bool,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.system.energies.is_empty() {
            return bad("system.energies must be non-empty".into());
        }
        if self.system.coupled_level >= self.system.energies.len() {
            return bad(format!(
                "system.coupled_level {} out of range for {} levels",
                self.system.coupled_level,
                self.system.energies.len()
            ));
        }
        if self.bath.g < 0.0 {
            return bad(format!("bath.g must be >= 0, got {}", self.bath.g));
        }
        if self.bath.omega_c <= 0.0 {
            return bad(format!("bath.omega_c must be > 0, got {}", self.bath.omega_c));
        }
        if self.bath.k == 0 {
            return bad("bath.k must be >= 1".into());
        }
        if self.bath.omega_max <= 0.0 {
            return bad(format!(
                "bath.omega_max must be > 0, got {}",
                self.bath.omega_max
            ));
        }
        if self.grid.beta <= 0.0 {
            return bad(format!("grid.beta must be > 0, got {}", self.grid.beta));
        }
        if self.grid.n < 8 {
            return bad(format!("grid.n must be >= 8, got {}", self.grid.n));
        }
        if self.mc.samples < 100 {
            return bad(format!("mc.samples must be >= 100, got {}", self.mc.samples));
        }
        if self.ed.k_used == 0 {
            return bad("ed.k_used must be >= 1".into());
        }
        Ok(())
    }

    pub fn spectral_density(&self) -> Result<SpectralDensity> {
        self.spectral_density_with_g(self.bath.g)
    }

    pub fn spectral_density_with_g(&self, g: f64) -> Result<SpectralDensity> {
        SpectralDensity::ohmic(g, self.bath.omega_c)
    }

    /// Discretized bath at the configured coupling.
    pub fn build_bath(&self) -> Result<DiscretizedBath> {
        self.build_bath_with_g(self.bath.g)
    }

    /// Discretized bath with an overridden coupling (sweeps).
    pub fn build_bath_with_g(&self, g: f64) -> Result<DiscretizedBath> {
        let j = self.spectral_density_with_g(g)?;
        let omega_hi = if self.bath.paper_interval {
            self.bath.omega_c
        } else {
            self.bath.omega_max * self.bath.omega_c
        };
        discretize(&j, self.bath.k, omega_hi, BinningScheme::Midpoint)
    }

    /// The bare system, before any counterterm.
    pub fn build_system(&self) -> Result<SystemModel> {
        build_system(
            &self.system.energies,
            CouplingSpec::Projector(self.system.coupled_level),
        )
    }

    /// The system actually propagated: with the counterterm +λ_disc f² when
    /// the flag is set (λ_disc taken from the given bath).
    pub fn build_run_system(&self, bath: &DiscretizedBath) -> Result<SystemModel> {
        let sys = self.build_system()?;
        if self.counterterm {
            sys.with_counterterm(bath.lambda_disc())
        } else {
            Ok(sys)
        }
    }

    pub fn build_grid(&self) -> Result<TimeGrid> {
        self.build_grid_with_beta(self.grid.beta)
    }

    pub fn build_grid_with_beta(&self, beta: f64) -> Result<TimeGrid> {
        TimeGrid::new(beta, self.grid.n)
    }
}
