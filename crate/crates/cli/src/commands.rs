use std::fmt::Write as _;
use std::fs;

use gfclt::coeffs::{self, PhiSequence};
use gfclt::permlab::{self, DistTable, IdentityReport};
use gfclt::singularity::{self, DecayFit, Singularity};
use gfclt::{
    compute_limits, defant_mu, defant_sigma2, kernel_self_check, DefantKernel, Kernel, KernelSpec,
    LimitParams, SelfCheck, TruncatedSeries2, C64,
};
use serde::Serialize;

use crate::config::{OutFormat, RunConfig};
use crate::{CliError, Outcome};

/// Drift tolerance against `3 - e`.
pub const MU_TOL: f64 = 1e-8;
/// Variance tolerance against `2 + 2e - e^2`.
pub const SIGMA2_TOL: f64 = 1e-7;
/// Largest acceptable change in the limits when the truncation is raised.
pub const TRUNCATION_TOL: f64 = 1e-10;
/// Largest acceptable disagreement between the series and quadrature routes.
pub const DUAL_PATH_TOL: f64 = 1e-8;
/// KS distance required at the largest `n` of the Monte Carlo grid.
pub const KS_FINAL_TOL: f64 = 0.05;

fn require<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Usage(format!("missing {flag}")))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn warn(warnings: &mut Vec<String>, msg: String) {
    log::warn!("{msg}");
    warnings.push(msg);
}

fn build_kernel(cfg: &RunConfig) -> Result<(KernelSpec, Box<dyn Kernel>), CliError> {
    let spec = require(&cfg.kernel_spec, "--kernel")?;
    let kernel = spec.build()?;
    if let Some(path) = &cfg.dump_series {
        fs::write(path, series_table(&spec)?.to_csv())?;
    }
    Ok((spec, kernel))
}

/// The coefficient table behind a series-defined kernel.
fn series_table(spec: &KernelSpec) -> Result<TruncatedSeries2, CliError> {
    match spec {
        KernelSpec::Defant { trunc } => Ok(DefantKernel::new(*trunc)?.fhat_series().clone()),
        KernelSpec::Series { coeffs, .. } => {
            let terms: Vec<(usize, usize, C64)> = coeffs
                .iter()
                .map(|&[m, n, re, im]| (m as usize, n as usize, C64::new(re, im)))
                .collect();
            let my = terms.iter().map(|t| t.0).max().unwrap_or(0);
            let nz = terms.iter().map(|t| t.1).max().unwrap_or(0);
            Ok(TruncatedSeries2::from_terms(terms, my, nz))
        }
        KernelSpec::Iid { .. } => Err(CliError::Usage(
            "--dump-series needs a defant or series kernel".into(),
        )),
    }
}

#[derive(Debug, Serialize)]
pub struct AnalyzeReport {
    pub version: &'static str,
    pub config: RunConfig,
    pub kernel: String,
    pub self_check: SelfCheck,
    pub limits: LimitParams,
    pub passed: bool,
}

pub fn analyze(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (_, k) = build_kernel(cfg)?;
    let self_check = kernel_self_check(k.as_ref());
    let limits = compute_limits(k.as_ref())?;
    let passed = self_check.passed;
    if !passed {
        log::warn!(
            "kernel self-check failed: max deviation {:e}",
            self_check.max_deviation()
        );
    }
    let report = AnalyzeReport {
        version: gfclt::VERSION,
        config: cfg.provenance(),
        kernel: k.name(),
        self_check,
        limits: limits.clone(),
        passed,
    };
    let body = match cfg.out_format {
        OutFormat::Json => to_json(&report)?,
        OutFormat::Csv => {
            let mut out = String::from("param,j,k,value\n");
            for (j, m) in limits.mu.iter().enumerate() {
                let _ = writeln!(out, "mu,{j},,{m:e}");
            }
            for (j, row) in limits.sigma.iter().enumerate() {
                for (l, s) in row.iter().enumerate() {
                    let _ = writeln!(out, "sigma,{j},{l},{s:e}");
                }
            }
            let _ = writeln!(out, "imag_residue,,,{:e}", limits.imag_residue);
            let _ = writeln!(out, "psd_slack,,,{:e}", limits.psd_slack);
            out
        }
    };
    Ok(Outcome { body, passed })
}

#[derive(Debug, Serialize)]
pub struct CoeffsReport {
    pub version: &'static str,
    pub config: RunConfig,
    pub kernel: String,
    pub x: Vec<f64>,
    pub n_max: usize,
    pub radius: f64,
    pub nodes: usize,
    pub singularity: Singularity,
    pub series: Option<Vec<C64>>,
    pub quadrature: Vec<C64>,
    pub principal: Vec<C64>,
    /// `max_n |series - quadrature|`, when both routes are available.
    pub dual_path_diff: Option<f64>,
    pub decay: DecayFit,
    pub passed: bool,
}

pub fn coeffs(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let (_, k) = build_kernel(cfg)?;
    let k = k.as_ref();
    let x = cfg.x_probe.clone();
    if x.len() != k.dim() {
        return Err(CliError::Usage(format!(
            "--x has {} component(s), kernel dimension is {}",
            x.len(),
            k.dim()
        )));
    }
    let n_max = require(&cfg.n_max, "--n-max")?;
    let root = singularity::track_root(k, &x)?;
    let radius = cfg.radius.unwrap_or(0.9 * root.b.norm());
    let nodes = coeffs::default_node_count(n_max);
    let quad = coeffs::phi_by_quadrature(k, &x, n_max, radius, nodes)?;
    let series = match coeffs::phi_by_series(k, &x, n_max) {
        Ok(s) => Some(s),
        Err(gfclt::Error::InvalidArgument(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let reference: &PhiSequence = series.as_ref().unwrap_or(&quad);
    let decay = singularity::decay_fit(&root, reference, n_max / 3, n_max);
    let principal: Vec<C64> = (0..=n_max)
        .map(|n| singularity::principal_part_phi(&root, n))
        .collect();
    let dual_path_diff = series.as_ref().map(|s| s.max_abs_diff(&quad));
    let passed = decay.passed && dual_path_diff.is_none_or(|d| d < DUAL_PATH_TOL);

    let body = match cfg.out_format {
        OutFormat::Json => to_json(&CoeffsReport {
            version: gfclt::VERSION,
            config: cfg.provenance(),
            kernel: k.name(),
            x,
            n_max,
            radius,
            nodes,
            singularity: root,
            series: series.as_ref().map(|s| s.values.clone()),
            quadrature: quad.values.clone(),
            principal: principal.clone(),
            dual_path_diff,
            decay,
            passed,
        })?,
        OutFormat::Csv => {
            let mut out = String::from("n,method,re,im,principal_err\n");
            let mut rows = |method: &str, values: &[C64]| {
                for (n, v) in values.iter().enumerate() {
                    let err = (v - principal[n]).norm();
                    let _ = writeln!(out, "{n},{method},{:e},{:e},{err:e}", v.re, v.im);
                }
            };
            if let Some(s) = &series {
                rows("series", &s.values);
            }
            rows("quadrature", &quad.values);
            rows("principal", &principal);
            out
        }
    };
    Ok(Outcome { body, passed })
}

#[derive(Debug, Serialize)]
pub struct LimitsCheck {
    pub mu: f64,
    pub sigma2: f64,
    pub mu_expected: f64,
    pub sigma2_expected: f64,
    pub mu_error: f64,
    pub sigma2_error: f64,
    pub imag_residue: f64,
    pub psd_slack: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct TruncationCheck {
    pub trunc: usize,
    pub reference_trunc: usize,
    pub mu_dev: f64,
    pub sigma2_dev: f64,
    pub tolerance: f64,
    pub stable: bool,
}

#[derive(Debug, Serialize)]
pub struct McRow {
    pub n: usize,
    pub samples: u64,
    pub mean_over_n: f64,
    pub var_over_n: f64,
    pub ks: f64,
}

#[derive(Debug, Serialize)]
pub struct McCheck {
    pub seed: u64,
    pub rows: Vec<McRow>,
    /// KS distance never increases along the grid.
    pub ks_nonincreasing: bool,
    /// KS at the largest `n` is at most the KS at the smallest.
    pub ks_trend_down: bool,
    pub ks_final_below_tol: bool,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub version: &'static str,
    pub config: RunConfig,
    pub identity: IdentityReport,
    pub limits: LimitsCheck,
    pub truncation: TruncationCheck,
    pub monte_carlo: McCheck,
    pub warnings: Vec<String>,
    pub passed: bool,
}

fn scalar_limits(k: &DefantKernel) -> Result<(f64, f64, LimitParams), CliError> {
    let lp = compute_limits(k)?;
    Ok((lp.mu[0], lp.sigma[0][0], lp))
}

pub fn verify_defant(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let trunc = require(&cfg.trunc, "--trunc")?;
    let n_max = require(&cfg.n_max, "--n-max")?;
    let samples = require(&cfg.samples, "--samples")?;
    let seed = require(&cfg.seed, "--seed")?;
    if samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    if cfg.n_grid.is_empty() || cfg.n_grid.contains(&0) {
        return Err(CliError::Usage("--n-grid needs positive sizes".into()));
    }
    let mut warnings = Vec::new();

    let identity = permlab::verify_descent_identity(n_max)?;
    if !identity.passed {
        warn(
            &mut warnings,
            format!(
                "descent identity failed: max discrepancy {:e}",
                identity.max_discrepancy
            ),
        );
    }

    let kernel = DefantKernel::new(trunc)?;
    let (mu, sigma2, lp) = scalar_limits(&kernel)?;
    let (mu_expected, sigma2_expected) = (defant_mu(), defant_sigma2());
    let limits = LimitsCheck {
        mu,
        sigma2,
        mu_expected,
        sigma2_expected,
        mu_error: (mu - mu_expected).abs(),
        sigma2_error: (sigma2 - sigma2_expected).abs(),
        imag_residue: lp.imag_residue,
        psd_slack: lp.psd_slack,
        passed: (mu - mu_expected).abs() < MU_TOL
            && (sigma2 - sigma2_expected).abs() < SIGMA2_TOL
            && lp.imag_residue < 1e-8
            && lp.psd_slack > -1e-8,
    };

    let reference_trunc = gfclt::kernel::DEFAULT_DEFANT_TRUNC.max(trunc + 8);
    let (mu_ref, sigma2_ref, _) = scalar_limits(&DefantKernel::new(reference_trunc)?)?;
    let mu_dev = (mu - mu_ref).abs();
    let sigma2_dev = (sigma2 - sigma2_ref).abs();
    let stable = mu_dev.max(sigma2_dev) <= TRUNCATION_TOL;
    if !stable {
        warn(
            &mut warnings,
            format!(
                "truncation {trunc} is not converged: limits move by {:e} at truncation {reference_trunc}",
                mu_dev.max(sigma2_dev)
            ),
        );
    }
    let truncation = TruncationCheck {
        trunc,
        reference_trunc,
        mu_dev,
        sigma2_dev,
        tolerance: TRUNCATION_TOL,
        stable,
    };

    let mut rows = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let table = permlab::mc_distribution(n, samples, seed)?;
        rows.push(McRow {
            n,
            samples,
            mean_over_n: table.mean() / n as f64,
            var_over_n: table.variance() / n as f64,
            ks: permlab::ks_to_normal(&table, mu_expected, sigma2_expected)?,
        });
    }
    let ks_nonincreasing = rows.windows(2).all(|w| w[1].ks <= w[0].ks);
    let first = rows.first().map_or(f64::NAN, |r| r.ks);
    let last = rows.last().map_or(f64::NAN, |r| r.ks);
    let ks_trend_down = last <= first;
    let ks_final_below_tol = last < KS_FINAL_TOL;
    if !ks_nonincreasing {
        warn(
            &mut warnings,
            "KS distance is not monotone along the n grid".into(),
        );
    }
    let monte_carlo = McCheck {
        seed,
        ks_nonincreasing,
        ks_trend_down,
        ks_final_below_tol,
        passed: ks_trend_down && ks_final_below_tol,
        rows,
    };

    let passed = identity.passed && limits.passed && monte_carlo.passed;
    let body = match cfg.out_format {
        OutFormat::Json => to_json(&VerifyReport {
            version: gfclt::VERSION,
            config: cfg.provenance(),
            identity,
            limits,
            truncation,
            monte_carlo,
            warnings,
            passed,
        })?,
        OutFormat::Csv => {
            let mut out = String::from("n,samples,mean_over_n,var_over_n,ks\n");
            for r in &monte_carlo.rows {
                let _ = writeln!(
                    out,
                    "{},{},{:e},{:e},{:e}",
                    r.n, r.samples, r.mean_over_n, r.var_over_n, r.ks
                );
            }
            out
        }
    };
    Ok(Outcome { body, passed })
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub mean_over_n: Option<f64>,
    pub var_over_n: Option<f64>,
    pub ks: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub version: &'static str,
    pub config: RunConfig,
    #[serde(flatten)]
    pub table: DistTable,
    pub summary: Summary,
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = require(&cfg.n, "--n")?;
    let samples = require(&cfg.samples, "--samples")?;
    let seed = require(&cfg.seed, "--seed")?;
    if samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let table = if cfg.exact && n <= permlab::MAX_EXACT_N {
        permlab::exact_distribution(n)?
    } else {
        if cfg.exact {
            log::warn!(
                "n = {n} is too large to enumerate (limit {}); sampling instead",
                permlab::MAX_EXACT_N
            );
        }
        permlab::mc_distribution(n, samples, seed)?
    };
    let summary = if n == 0 {
        Summary {
            mean_over_n: None,
            var_over_n: None,
            ks: None,
        }
    } else {
        Summary {
            mean_over_n: Some(table.mean() / n as f64),
            var_over_n: Some(table.variance() / n as f64),
            ks: Some(permlab::ks_to_normal(&table, defant_mu(), defant_sigma2())?),
        }
    };
    let body = match cfg.out_format {
        OutFormat::Json => to_json(&SimulateReport {
            version: gfclt::VERSION,
            config: cfg.provenance(),
            table,
            summary,
        })?,
        OutFormat::Csv => table.to_csv(),
    };
    Ok(Outcome { body, passed: true })
}
