use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gfclt::KernelSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_N_GRID: [usize; 4] = [50, 200, 1000, 2000];
pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 7;
pub const DEFAULT_COEFF_N_MAX: usize = 48;
pub const DEFAULT_IDENTITY_N_MAX: usize = 9;

#[derive(Debug, Parser)]
#[command(
    name = "gfclt",
    version,
    about = "Drift, covariance and diagnostics for kernels g(x, z) = 1 / sum phi_n(x) z^n"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Self-check a kernel and compute the limit drift and covariance.
    Analyze {
        #[command(flatten)]
        kernel: KernelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Recover phi_{Y_n}(x) by series and quadrature and fit the principal-part decay.
    Coeffs {
        #[command(flatten)]
        kernel: KernelArgs,
        /// Frequency probe (comma separated for d > 1).
        #[arg(
            long = "x",
            value_delimiter = ',',
            allow_hyphen_values = true,
            default_value = "0"
        )]
        x: Vec<f64>,
        #[arg(long = "n-max", default_value_t = DEFAULT_COEFF_N_MAX)]
        n_max: usize,
        /// Quadrature radius; defaults to 0.9 |b(x)|.
        #[arg(long = "r")]
        radius: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Full check of the descent statistic of stack-sorted permutations.
    VerifyDefant {
        #[arg(long)]
        trunc: Option<usize>,
        /// Largest n for the exhaustive descent-identity check.
        #[arg(long = "n-max", default_value_t = DEFAULT_IDENTITY_N_MAX)]
        n_max: usize,
        /// Permutation sizes for the Monte Carlo convergence table.
        #[arg(long = "n-grid", value_delimiter = ',', default_values_t = DEFAULT_N_GRID)]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Distribution of des(s(pi)) + 1 over S_n, exact or sampled.
    Simulate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Enumerate S_n exhaustively (n <= 10).
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Kernel spec: a JSON file path or inline JSON.
    #[arg(long)]
    pub kernel: String,
    /// Overrides the truncation of a `defant` kernel.
    #[arg(long)]
    pub trunc: Option<usize>,
    /// Writes the kernel's coefficient table as CSV (m,n,re,im).
    #[arg(long = "dump-series")]
    pub dump_series: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    pub format: OutFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Analyze,
    Coeffs,
    VerifyDefant,
    Simulate,
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_spec: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x_probe: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trunc: Option<usize>,
    #[serde(default)]
    pub exact: bool,
    pub out_format: OutFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_series: Option<PathBuf>,
}

impl RunConfig {
    fn base(command: Command, output: &OutputArgs) -> Self {
        Self {
            command,
            kernel_spec: None,
            n_max: None,
            x_probe: Vec::new(),
            radius: None,
            n: None,
            n_grid: Vec::new(),
            samples: None,
            seed: None,
            trunc: None,
            exact: false,
            out_format: output.format,
            out_path: output.out.clone(),
            dump_series: None,
        }
    }

    /// The configuration embedded in reports: everything that determines the
    /// result, without output destinations.
    pub fn provenance(&self) -> RunConfig {
        RunConfig {
            out_path: None,
            dump_series: None,
            ..self.clone()
        }
    }

    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        Ok(match &cli.command {
            CliCommand::Analyze { kernel, output } => {
                let mut cfg = Self::base(Command::Analyze, output);
                cfg.apply_kernel(kernel)?;
                cfg
            }
            CliCommand::Coeffs {
                kernel,
                x,
                n_max,
                radius,
                output,
            } => {
                let mut cfg = Self::base(Command::Coeffs, output);
                cfg.apply_kernel(kernel)?;
                cfg.x_probe = x.clone();
                cfg.n_max = Some(*n_max);
                cfg.radius = *radius;
                cfg
            }
            CliCommand::VerifyDefant {
                trunc,
                n_max,
                n_grid,
                samples,
                seed,
                output,
            } => {
                let mut cfg = Self::base(Command::VerifyDefant, output);
                let trunc = trunc.unwrap_or(gfclt::kernel::DEFAULT_DEFANT_TRUNC);
                cfg.kernel_spec = Some(KernelSpec::Defant { trunc });
                cfg.trunc = Some(trunc);
                cfg.n_max = Some(*n_max);
                cfg.n_grid = n_grid.clone();
                cfg.samples = Some(*samples);
                cfg.seed = Some(*seed);
                cfg
            }
            CliCommand::Simulate {
                n,
                samples,
                seed,
                exact,
                output,
            } => {
                let mut cfg = Self::base(Command::Simulate, output);
                cfg.n = Some(*n);
                cfg.samples = Some(*samples);
                cfg.seed = Some(*seed);
                cfg.exact = *exact;
                cfg
            }
        })
    }

    fn apply_kernel(&mut self, args: &KernelArgs) -> Result<(), CliError> {
        let mut spec = load_kernel_spec(&args.kernel)?;
        if let Some(t) = args.trunc {
            match &mut spec {
                KernelSpec::Defant { trunc } => *trunc = t,
                _ => {
                    return Err(CliError::Usage(
                        "--trunc only applies to defant kernels".into(),
                    ))
                }
            }
        }
        if let KernelSpec::Defant { trunc } = spec {
            self.trunc = Some(trunc);
        }
        self.kernel_spec = Some(spec);
        self.dump_series = args.dump_series.clone();
        Ok(())
    }
}

/// Reads a kernel spec from inline JSON (leading `{`) or a file.
pub fn load_kernel_spec(source: &str) -> Result<KernelSpec, CliError> {
    let text = if source.trim_start().starts_with('{') {
        source.to_string()
    } else {
        fs::read_to_string(source)
            .map_err(|e| CliError::Usage(format!("cannot read kernel spec {source}: {e}")))?
    };
    KernelSpec::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))
}
