//! Experiment orchestration: the four benchmark sweeps as machine-readable
//! tables, plus the small diagnostic tables behind the `lambda`, `kernel`,
//! and `sample` subcommands.
//!
//! Output determinism: with a fixed config and seed the data rows are
//! byte-identical across reruns; only the wall-time metadata field varies.
//! Every theory column is recomputed from the config at emission time.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::edref::{displaced_trace_reduced, fock_ed_reduced, FockConfig};
use crate::error::{Error, Result};
use crate::estimator::{
    extract_hmf_with_errors, fit_basis_with_errors, lambda_estimate, level_shift_errors,
    level_shifts, mean_density, sample_density, top_weight_share, Gauge, MeanDensity, SamplePlan,
    StreamRange,
};
use crate::noise::{factorize, sample_path, stream_rng, NoiseFactor};
use crate::kernel::{c_beta, covariance_matrix, kernel_continuum, kernel_discrete};
use crate::operator::gibbs_state;
use crate::system::SystemModel;

/// Default sweep grids spanning weak to strong coupling at desk-scale
/// runtimes.
pub const DEFAULT_BETA_SWEEP: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_G_SWEEP: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 2.0];
pub const DEFAULT_G2_SWEEP: [f64; 4] = [0.25, 1.0, 2.25, 4.0];

/// Fraction of samples inspected by the heavy-tail diagnostic, and the share
/// of total weight above which a warning is raised.
pub const ESS_TOP_FRACTION: f64 = 0.01;
pub const ESS_WARN_SHARE: f64 = 0.5;

/// One table cell; integers keep level indices readable in CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v}"),
        }
    }
}

/// Run metadata echoed on the first output line.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub config: RunConfig,
    pub lambda_disc: f64,
    pub lambda_cont: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_ed: Option<f64>,
    pub seed_manifest: Vec<StreamRange>,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
}

/// A named-column table with metadata; the common shape of every experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub metadata: Metadata,
}

impl ExperimentResult {
    /// CSV with a leading '#'-prefixed JSON metadata line.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        let meta = serde_json::to_string(&self.metadata)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        writeln!(w, "#{meta}")?;
        w.write_all(self.data_csv_bytes().as_slice())?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: &mut W) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        writeln!(w, "{text}")?;
        Ok(())
    }

    /// Header plus data rows (everything except the metadata line); the
    /// deterministic part of the output.
    pub fn data_csv_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(self.columns.join(",").as_bytes());
        out.push(b'\n');
        for row in &self.rows {
            let line = row
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
        out
    }
}

/// Thread pool honoring the `MEANFORCE_THREADS` cap (0 or unset = automatic).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let requested = std::env::var("MEANFORCE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(requested)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

fn cell_stream_base(cell: u64) -> u64 {
    cell << 40
}

/// Deterministic batched accumulation of the integrated-field moments over
/// `samples` independent paths.
fn field_moments(
    factor: &NoiseFactor,
    seed: u64,
    stream_base: u64,
    samples: u64,
) -> (f64, f64, f64, Vec<StreamRange>) {
    let batch = 2048u64;
    let batches = samples.div_ceil(batch);
    let parts: Vec<(f64, f64, f64)> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let lo = bi * batch;
            let hi = ((bi + 1) * batch).min(samples);
            let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
            for i in lo..hi {
                let mut rng = stream_rng(seed, stream_base + i);
                let p = sample_path(factor, &mut rng);
                let x = crate::noise::integrated_field(&p);
                s1 += x;
                s2 += x * x;
                s4 += x * x * x * x;
            }
            (s1, s2, s4)
        })
        .collect();
    let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
    for (a, b, c) in parts {
        s1 += a;
        s2 += b;
        s4 += c;
    }
    (
        s1,
        s2,
        s4,
        vec![StreamRange {
            start: stream_base,
            count: samples,
        }],
    )
}

/// Sample variance of X and the standard error of that variance (via the
/// fourth-moment estimate).
fn variance_with_stderr(s1: f64, s2: f64, s4: f64, m: u64) -> (f64, f64) {
    let n = m as f64;
    let mean = s1 / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let m2 = (s2 / n - mean * mean).max(0.0);
    let m4 = s4 / n;
    let var_of_var = ((m4 - (n - 3.0) / (n - 1.0) * m2 * m2) / n).max(0.0);
    (var, var_of_var.sqrt())
}

/// Variance of the integrated field against the 2βλ_disc prediction over a
/// (β, g) sweep.
pub fn run_fig1(cfg: &RunConfig, betas: &[f64], gs: &[f64]) -> Result<ExperimentResult> {
    cfg.validate()?;
    if betas.is_empty() || gs.is_empty() {
        return Err(Error::InvalidConfig("sweeps must be non-empty".into()));
    }
    let start = Instant::now();
    let pool = worker_pool()?;
    let mut rows = Vec::new();
    let mut manifest = Vec::new();
    let mut cell = 0u64;
    for &beta in betas {
        for &g in gs {
            let bath = cfg.build_bath_with_g(g)?;
            let grid = cfg.build_grid_with_beta(beta)?;
            let factor = factorize(&covariance_matrix(&bath, &grid)?)?;
            let (s1, s2, s4, mut ranges) = pool.install(|| {
                field_moments(&factor, cfg.mc.seed, cell_stream_base(cell), cfg.mc.samples)
            });
            manifest.append(&mut ranges);
            let (var, stderr) = variance_with_stderr(s1, s2, s4, cfg.mc.samples);
            rows.push(vec![
                Cell::Float(beta),
                Cell::Float(g),
                Cell::Float(var),
                Cell::Float(stderr),
                Cell::Float(c_beta(&bath, beta)),
            ]);
            cell += 1;
        }
    }
    let (lambda_disc, lambda_cont) = baseline_lambdas(cfg)?;
    Ok(ExperimentResult {
        columns: vec!["beta", "g", "var_x_sample", "var_x_stderr", "var_x_theory"],
        rows,
        metadata: Metadata {
            config: cfg.clone(),
            lambda_disc,
            lambda_cont,
            lambda_ed: None,
            seed_manifest: manifest,
            wall_time_s: start.elapsed().as_secs_f64(),
            warnings: Vec::new(),
        },
    })
}

fn baseline_lambdas(cfg: &RunConfig) -> Result<(f64, f64)> {
    let bath = cfg.build_bath()?;
    let cont = cfg.spectral_density()?.reorganization_energy()?;
    Ok((bath.lambda_disc(), cont))
}

struct McPoint {
    md: MeanDensity,
    top_share: f64,
    manifest: Vec<StreamRange>,
}

fn mc_point(
    cfg: &RunConfig,
    sys: &SystemModel,
    factor: &NoiseFactor,
    cell: u64,
) -> Result<McPoint> {
    let plan = SamplePlan::new(cfg.mc.seed, cfg.mc.samples, cfg.mc.antithetic)
        .with_stream_base(cell_stream_base(cell));
    let run = sample_density(sys, factor, &plan)?;
    let md = mean_density(&run.estimate)?;
    Ok(McPoint {
        md,
        top_share: top_weight_share(&run.weights, ESS_TOP_FRACTION),
        manifest: run.estimate.seed_manifest().to_vec(),
    })
}

/// Coupled-level population and extracted reorganization energy over a
/// (β, g) sweep, with the closed-form and truncated-Fock references.
pub fn run_fig2(cfg: &RunConfig, betas: &[f64], gs: &[f64]) -> Result<ExperimentResult> {
    cfg.validate()?;
    if betas.is_empty() || gs.is_empty() {
        return Err(Error::InvalidConfig("sweeps must be non-empty".into()));
    }
    let start = Instant::now();
    let pool = worker_pool()?;
    let coupled = cfg.system.coupled_level;
    let mut rows = Vec::new();
    let mut manifest = Vec::new();
    let mut warnings = Vec::new();
    let mut lambda_ed_meta = None;
    let mut cell = 0u64;
    for &beta in betas {
        for &g in gs {
            let bath = cfg.build_bath_with_g(g)?;
            let sys = cfg.build_run_system(&bath)?;
            let lambda_disc = bath.lambda_disc();
            let lambda_cont = cfg.spectral_density_with_g(g)?.reorganization_energy()?;
            let grid = cfg.build_grid_with_beta(beta)?;
            let factor = factorize(&covariance_matrix(&bath, &grid)?)?;

            let p_analytic = displaced_trace_reduced(&sys, &bath, beta)?;
            let p_closed = crate::estimator::analytic_reduced(&sys, lambda_disc, beta)?;
            let fock = fock_ed_reduced(
                &sys,
                &bath,
                &FockConfig::new(cfg.ed.n_max, cfg.ed.k_used),
                beta,
            )?;
            lambda_ed_meta = Some(fock.lambda);

            let point = pool.install(|| mc_point(cfg, &sys, &factor, cell))?;
            manifest.extend_from_slice(&point.manifest);
            if point.top_share > ESS_WARN_SHARE {
                warnings.push(format!(
                    "beta={beta} g={g}: top {:.0}% of samples carries {:.1}% of total weight",
                    ESS_TOP_FRACTION * 100.0,
                    point.top_share * 100.0
                ));
            }
            let bare = gibbs_state(sys.hamiltonian(), beta)?.diagonal_re();
            let (lam_est, _lam_err) = lambda_estimate(&point.md, &bare, beta, coupled)?;
            let p = point.md.populations();
            let pe = point.md.population_stderr();
            rows.push(vec![
                Cell::Float(beta),
                Cell::Float(g),
                Cell::Float(p_closed.matrix()[(coupled, coupled)].re),
                Cell::Float(p_analytic.matrix()[(coupled, coupled)].re),
                Cell::Float(fock.rho.matrix()[(coupled, coupled)].re),
                Cell::Float(p[coupled]),
                Cell::Float(pe[coupled]),
                Cell::Float(lam_est),
                Cell::Float(if g > 0.0 { lam_est / (g * g) } else { f64::NAN }),
                Cell::Float(lambda_disc),
                Cell::Float(lambda_cont),
            ]);
            cell += 1;
        }
    }
    let (lambda_disc, lambda_cont) = baseline_lambdas(cfg)?;
    Ok(ExperimentResult {
        columns: vec![
            "beta",
            "g",
            "p4_analytic",
            "p4_ed_closed",
            "p4_ed_fock",
            "p4_mc",
            "p4_mc_stderr",
            "lambda_est",
            "lambda_est_over_g2",
            "lambda_disc",
            "lambda_cont",
        ],
        rows,
        metadata: Metadata {
            config: cfg.clone(),
            lambda_disc,
            lambda_cont,
            lambda_ed: lambda_ed_meta,
            seed_manifest: manifest,
            wall_time_s: start.elapsed().as_secs_f64(),
            warnings,
        },
    })
}

/// Mean-force operator coefficients over a g² sweep at fixed β: the fitted
/// {𝕀, H_S, f²} coefficients with their errors, plus coherence diagnostics.
pub fn run_fig3(cfg: &RunConfig, g2s: &[f64], beta: f64) -> Result<ExperimentResult> {
    cfg.validate()?;
    if g2s.is_empty() {
        return Err(Error::InvalidConfig("sweep must be non-empty".into()));
    }
    let start = Instant::now();
    let pool = worker_pool()?;
    let coupled = cfg.system.coupled_level;
    let mut rows = Vec::new();
    let mut manifest = Vec::new();
    let mut warnings = Vec::new();
    for (cell, &g2) in g2s.iter().enumerate() {
        if g2 < 0.0 {
            return Err(Error::InvalidConfig(format!("g² must be >= 0, got {g2}")));
        }
        let g = g2.sqrt();
        let bath = cfg.build_bath_with_g(g)?;
        let sys = cfg.build_run_system(&bath)?;
        let lambda_disc = bath.lambda_disc();
        let grid = cfg.build_grid_with_beta(beta)?;
        let factor = factorize(&covariance_matrix(&bath, &grid)?)?;

        let point = pool.install(|| mc_point(cfg, &sys, &factor, cell as u64))?;
        manifest.extend_from_slice(&point.manifest);
        if point.top_share > ESS_WARN_SHARE {
            warnings.push(format!(
                "g2={g2}: top {:.0}% of samples carries {:.1}% of total weight",
                ESS_TOP_FRACTION * 100.0,
                point.top_share * 100.0
            ));
        }

        let anchor = Gauge::AnchorLevel0 {
            target: sys.level_energies()[0],
        };
        let hwe = extract_hmf_with_errors(&point.md, beta, anchor)?;
        let (fit, errs) = fit_basis_with_errors(&hwe, &sys)?;
        let p_analytic = crate::estimator::analytic_reduced(&sys, lambda_disc, beta)?;
        let p = point.md.populations();
        rows.push(vec![
            Cell::Float(g2),
            Cell::Float(p[coupled]),
            Cell::Float(p_analytic.matrix()[(coupled, coupled)].re),
            Cell::Float(fit.a_h),
            Cell::Float(errs.a_h_err),
            Cell::Float(fit.a_p),
            Cell::Float(errs.a_p_err),
            Cell::Float(fit.offdiag_norm),
            Cell::Float(fit.residual),
            Cell::Float(-lambda_disc),
            Cell::Float(point.top_share),
        ]);
    }
    let (lambda_disc, lambda_cont) = baseline_lambdas(cfg)?;
    Ok(ExperimentResult {
        columns: vec![
            "g2",
            "p4_mc",
            "p4_analytic",
            "a_h",
            "a_h_err",
            "a_p",
            "a_p_err",
            "offdiag_norm",
            "residual",
            "minus_lambda_disc",
            "ess_top1_share",
        ],
        rows,
        metadata: Metadata {
            config: cfg.clone(),
            lambda_disc,
            lambda_cont,
            lambda_ed: None,
            seed_manifest: manifest,
            wall_time_s: start.elapsed().as_secs_f64(),
            warnings,
        },
    })
}

/// Per-level populations and mean-force shifts at a single (β, g) point.
pub fn run_fig4(cfg: &RunConfig, beta: f64, g: f64) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = worker_pool()?;
    let bath = cfg.build_bath_with_g(g)?;
    let sys = cfg.build_run_system(&bath)?;
    let lambda_disc = bath.lambda_disc();
    let grid = cfg.build_grid_with_beta(beta)?;
    let factor = factorize(&covariance_matrix(&bath, &grid)?)?;

    let point = pool.install(|| mc_point(cfg, &sys, &factor, 0))?;
    let mut warnings = Vec::new();
    if point.top_share > ESS_WARN_SHARE {
        warnings.push(format!(
            "beta={beta} g={g}: top {:.0}% of samples carries {:.1}% of total weight",
            ESS_TOP_FRACTION * 100.0,
            point.top_share * 100.0
        ));
    }

    let bare = gibbs_state(sys.hamiltonian(), beta)?.diagonal_re();
    let analytic = crate::estimator::analytic_reduced(&sys, lambda_disc, beta)?;
    let fock = fock_ed_reduced(
        &sys,
        &bath,
        &FockConfig::new(cfg.ed.n_max, cfg.ed.k_used),
        beta,
    )?;
    let anchor = Gauge::AnchorLevel0 {
        target: sys.level_energies()[0],
    };
    let hwe = extract_hmf_with_errors(&point.md, beta, anchor)?;
    let shifts = level_shifts(&hwe.h, &sys)?;
    let shift_errs = level_shift_errors(&hwe);
    let p = point.md.populations();
    let pe = point.md.population_stderr();

    let rows = (0..sys.dim())
        .map(|i| {
            vec![
                Cell::Int(i as i64),
                Cell::Float(bare[i]),
                Cell::Float(analytic.matrix()[(i, i)].re),
                Cell::Float(fock.rho.matrix()[(i, i)].re),
                Cell::Float(p[i]),
                Cell::Float(pe[i]),
                Cell::Float(shifts[i]),
                Cell::Float(shift_errs[i]),
            ]
        })
        .collect();

    let lambda_cont = cfg.spectral_density_with_g(g)?.reorganization_energy()?;
    Ok(ExperimentResult {
        columns: vec![
            "level",
            "p_bare",
            "p_analytic",
            "p_ed",
            "p_mc",
            "p_mc_stderr",
            "shift",
            "shift_err",
        ],
        rows,
        metadata: Metadata {
            config: cfg.clone(),
            lambda_disc,
            lambda_cont,
            lambda_ed: Some(fock.lambda),
            seed_manifest: point.manifest,
            wall_time_s: start.elapsed().as_secs_f64(),
            warnings,
        },
    })
}

/// Reorganization-energy report for the `lambda` subcommand.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LambdaReport {
    pub lambda_cont: f64,
    pub lambda_disc: f64,
    /// λ of the coarsened bath the Fock ED would use.
    pub lambda_ed: f64,
}

pub fn lambda_report(cfg: &RunConfig) -> Result<LambdaReport> {
    cfg.validate()?;
    let bath = cfg.build_bath()?;
    let coarse = bath.coarsen(cfg.ed.k_used)?;
    Ok(LambdaReport {
        lambda_cont: cfg.spectral_density()?.reorganization_energy()?,
        lambda_disc: bath.lambda_disc(),
        lambda_ed: coarse.lambda_disc(),
    })
}

/// K(τ) table over one β interval for the `kernel` subcommand: the
/// discretized-bath kernel and the continuum kernel at the grid lags.
pub fn kernel_table(cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let bath = cfg.build_bath()?;
    let j = cfg.spectral_density()?;
    let grid = cfg.build_grid()?;
    let beta = grid.beta();
    let mut rows = Vec::new();
    for l in 0..grid.len() {
        let tau = l as f64 * grid.delta();
        rows.push(vec![
            Cell::Float(tau),
            Cell::Float(kernel_discrete(&bath, tau, beta)?),
            Cell::Float(kernel_continuum(&j, tau, beta)?),
        ]);
    }
    let (lambda_disc, lambda_cont) = baseline_lambdas(cfg)?;
    Ok(ExperimentResult {
        columns: vec!["tau", "k_discrete", "k_continuum"],
        rows,
        metadata: Metadata {
            config: cfg.clone(),
            lambda_disc,
            lambda_cont,
            lambda_ed: None,
            seed_manifest: Vec::new(),
            wall_time_s: start.elapsed().as_secs_f64(),
            warnings: Vec::new(),
        },
    })
}

/// Noise-path statistics for the `sample` subcommand: per-slice sample mean
/// and variance of the field against the covariance diagonal, with the
/// integrated-field variance in the metadata warnings-free summary row.
pub fn sample_table(cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let start = Instant::now();
    let pool = worker_pool()?;
    let bath = cfg.build_bath()?;
    let grid = cfg.build_grid()?;
    let sigma = covariance_matrix(&bath, &grid)?;
    let factor = factorize(&sigma)?;
    let n = grid.len();
    let samples = cfg.mc.samples;

    let batch = 2048u64;
    let batches = samples.div_ceil(batch);
    let parts: Vec<(Vec<f64>, Vec<f64>, f64, f64, f64)> = pool.install(|| {
        (0..batches)
            .into_par_iter()
            .map(|bi| {
                let lo = bi * batch;
                let hi = ((bi + 1) * batch).min(samples);
                let mut mean = vec![0.0; n];
                let mut sq = vec![0.0; n];
                let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
                for i in lo..hi {
                    let mut rng = stream_rng(cfg.mc.seed, i);
                    let p = sample_path(&factor, &mut rng);
                    for (k, &v) in p.values().iter().enumerate() {
                        mean[k] += v;
                        sq[k] += v * v;
                    }
                    let x = crate::noise::integrated_field(&p);
                    s1 += x;
                    s2 += x * x;
                    s4 += x * x * x * x;
                }
                (mean, sq, s1, s2, s4)
            })
            .collect()
    });
    let mut mean = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let (mut s1, mut s2, mut s4) = (0.0, 0.0, 0.0);
    for (m, q, a, b, c) in parts {
        for k in 0..n {
            mean[k] += m[k];
            sq[k] += q[k];
        }
        s1 += a;
        s2 += b;
        s4 += c;
    }
    let m = samples as f64;
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let mu = mean[k] / m;
        let var = (sq[k] / m - mu * mu).max(0.0) * m / (m - 1.0);
        rows.push(vec![
            Cell::Float(grid.midpoint(k)),
            Cell::Float(mu),
            Cell::Float(var),
            Cell::Float(sigma.sigma()[(k, k)]),
        ]);
    }
    let (var_x, var_x_err) = variance_with_stderr(s1, s2, s4, samples);
    let (lambda_disc, lambda_cont) = baseline_lambdas(cfg)?;
    Ok(ExperimentResult {
        columns: vec!["tau", "xi_mean", "xi_var", "xi_var_theory"],
        rows,
        metadata: Metadata {
            config: cfg.clone(),
            lambda_disc,
            lambda_cont,
            lambda_ed: None,
            seed_manifest: vec![StreamRange {
                start: 0,
                count: samples,
            }],
            wall_time_s: start.elapsed().as_secs_f64(),
            warnings: vec![format!(
                "var_x={var_x} var_x_stderr={var_x_err} var_x_theory={}",
                c_beta(&bath, grid.beta())
            )],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.mc.samples = 2000;
        cfg.grid.n = 16;
        cfg.bath.k = 40;
        cfg.ed.n_max = 3;
        cfg.ed.k_used = 2;
        cfg
    }

    #[test]
    fn fig1_zero_coupling_row_is_exact() {
        let cfg = tiny_cfg();
        let res = run_fig1(&cfg, &[1.0], &[0.0, 0.5]).unwrap();
        assert_eq!(res.rows.len(), 2);
        // g = 0: variance and theory both exactly zero
        assert_eq!(res.rows[0][2], Cell::Float(0.0));
        assert_eq!(res.rows[0][4], Cell::Float(0.0));
    }

    #[test]
    fn fig1_variance_within_band() {
        let mut cfg = tiny_cfg();
        cfg.mc.samples = 20_000;
        cfg.grid.n = 64;
        cfg.bath.k = 200;
        let res = run_fig1(&cfg, &[0.5, 2.0], &[1.0]).unwrap();
        for row in &res.rows {
            let (var, err, theory) = match (row[2], row[3], row[4]) {
                (Cell::Float(a), Cell::Float(b), Cell::Float(c)) => (a, b, c),
                _ => panic!("bad row"),
            };
            assert!(
                (var - theory).abs() <= 4.0 * err,
                "var {var} theory {theory} err {err}"
            );
        }
    }

    #[test]
    fn rerun_produces_identical_data_rows() {
        let cfg = tiny_cfg();
        let a = run_fig1(&cfg, &[0.5, 1.0], &[0.5, 1.0]).unwrap();
        let b = run_fig1(&cfg, &[0.5, 1.0], &[0.5, 1.0]).unwrap();
        assert_eq!(a.data_csv_bytes(), b.data_csv_bytes());

        let a2 = run_fig2(&cfg, &[0.5], &[0.5]).unwrap();
        let b2 = run_fig2(&cfg, &[0.5], &[0.5]).unwrap();
        assert_eq!(a2.data_csv_bytes(), b2.data_csv_bytes());
    }

    #[test]
    fn fig2_closed_forms_agree() {
        let cfg = tiny_cfg();
        let res = run_fig2(&cfg, &[0.5, 2.0], &[0.5]).unwrap();
        for row in &res.rows {
            let (pa, pc) = match (row[2], row[3]) {
                (Cell::Float(a), Cell::Float(b)) => (a, b),
                _ => panic!("bad row"),
            };
            assert!((pa - pc).abs() < 1e-13);
        }
    }

    #[test]
    fn fig2_infinite_temperature_limit() {
        let mut cfg = tiny_cfg();
        cfg.mc.samples = 4000;
        let res = run_fig2(&cfg, &[0.01], &[0.5, 1.0]).unwrap();
        for row in &res.rows {
            if let Cell::Float(p) = row[2] {
                assert!((p - 0.2).abs() < 0.01, "p4 -> 1/5 at beta -> 0, got {p}");
            }
        }
    }

    #[test]
    fn fig3_zero_coupling_is_exact() {
        let cfg = tiny_cfg();
        let res = run_fig3(&cfg, &[0.0], 2.0).unwrap();
        let row = &res.rows[0];
        match (row[3], row[5]) {
            (Cell::Float(a_h), Cell::Float(a_p)) => {
                assert!((a_h - 1.0).abs() < 1e-9, "a_h = {a_h}");
                assert!(a_p.abs() < 1e-9, "a_p = {a_p}");
            }
            _ => panic!("bad row"),
        }
    }

    #[test]
    fn fig4_gauge_anchor_is_exact_zero() {
        let cfg = tiny_cfg();
        let res = run_fig4(&cfg, 1.0, 0.5).unwrap();
        match (res.rows[0][6], res.rows[0][7]) {
            (Cell::Float(shift0), Cell::Float(err0)) => {
                assert_eq!(shift0, 0.0);
                assert!(err0 < 1e-12);
            }
            _ => panic!("bad row"),
        }
    }

    #[test]
    fn csv_has_metadata_line_and_header() {
        let cfg = tiny_cfg();
        let res = run_fig1(&cfg, &[0.5], &[0.5]).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let meta = lines.next().unwrap();
        assert!(meta.starts_with('#'));
        let parsed: serde_json::Value = serde_json::from_str(&meta[1..]).unwrap();
        assert!(parsed["lambda_disc"].is_number());
        assert_eq!(
            lines.next().unwrap(),
            "beta,g,var_x_sample,var_x_stderr,var_x_theory"
        );
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn kernel_table_has_grid_rows() {
        let cfg = tiny_cfg();
        let res = kernel_table(&cfg).unwrap();
        assert_eq!(res.rows.len(), cfg.grid.n);
    }

    #[test]
    fn lambda_report_consistency() {
        let cfg = tiny_cfg();
        let rep = lambda_report(&cfg).unwrap();
        assert!((rep.lambda_disc - rep.lambda_ed).abs() < 1e-12);
        assert!((rep.lambda_disc - rep.lambda_cont).abs() / rep.lambda_cont < 0.01);
    }
}
