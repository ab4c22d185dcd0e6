//! Flag parsing and `--config` merging.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Values that may come from flags or from a `--config` JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Inverse temperature β ≥ 0.
    #[arg(long)]
    pub beta: Option<f64>,
    /// External field h ≥ 0.
    #[arg(long)]
    pub h: Option<f64>,
    /// Number of spins.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub n: Option<usize>,
    /// Iteration depth.
    #[arg(long)]
    pub k: Option<usize>,
    /// Number of disorder draws, Monte Carlo draws or test configurations.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Gauss–Hermite order.
    #[arg(long)]
    pub quad_order: Option<usize>,
    /// Radius of the restricted set.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Solver or root-finding tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Field grid `a:b:step` for phase-scan.
    #[arg(long)]
    pub h_grid: Option<String>,
    /// Fixed-point solver for solve-q: auto, damped or bisection.
    #[arg(long)]
    pub solver: Option<String>,
}

macro_rules! merge_fields {
    ($a:expr, $b:expr, $($f:ident),*) => {{
        let mut out = Settings::default();
        $(
            out.$f = match (&$a.$f, &$b.$f) {
                (Some(x), Some(y)) if x != y => {
                    return Err(CliError::Usage(format!(
                        "--{} given as {:?} on the command line and {:?} in the config file",
                        stringify!($f), x, y
                    )))
                }
                (Some(x), _) | (None, Some(x)) => Some(x.clone()),
                (None, None) => None,
            };
        )*
        out
    }};
}

impl Settings {
    /// Combines flags with a config file; a field set differently in both is an error.
    pub fn merge(&self, file: &Settings) -> Result<Settings, CliError> {
        Ok(merge_fields!(
            self, file, beta, h, n, k, samples, quad_order, epsilon, tol, seed, format, h_grid,
            solver
        ))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sktap",
    version,
    about = "Seeded experiments on the SK model's TAP construction"
)]
pub struct Cli {
    /// One of: solve-q, se-table, phase-scan, tap-run, moments, free-energy,
    /// lower-bound, decomp-check.
    pub command: String,
    #[command(flatten)]
    pub settings: Settings,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// JSON file with default values for any of the numeric flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// tap-run: write the final state to this binary file.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    /// moments, decomp-check: read the state from a tap-run dump.
    #[arg(long)]
    pub state: Option<PathBuf>,
}

/// Fully merged configuration handed to a command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: String,
    pub settings: Settings,
    pub out_path: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dump: Option<PathBuf>,
    pub state: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let settings = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", path.display()))
                })?;
                let file: Settings = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))?;
                cli.settings.merge(&file)?
            }
            None => cli.settings.clone(),
        };
        if cli.threads == Some(0) {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        Ok(RunConfig {
            command: cli.command,
            settings,
            out_path: cli.out,
            threads: cli.threads,
            dump: cli.dump,
            state: cli.state,
        })
    }

    pub fn format(&self) -> Format {
        self.settings.format.unwrap_or_default()
    }

    pub fn beta(&self) -> Result<f64, CliError> {
        self.settings
            .beta
            .ok_or_else(|| CliError::Usage(format!("{} needs --beta", self.command)))
    }

    pub fn h(&self) -> Result<f64, CliError> {
        self.settings
            .h
            .ok_or_else(|| CliError::Usage(format!("{} needs --h", self.command)))
    }

    pub fn n_or(&self, default: usize) -> usize {
        self.settings.n.unwrap_or(default)
    }

    pub fn k_or(&self, default: usize) -> usize {
        self.settings.k.unwrap_or(default)
    }

    pub fn samples_or(&self, default: usize) -> usize {
        self.settings.samples.unwrap_or(default)
    }

    pub fn epsilon_or(&self, default: f64) -> f64 {
        self.settings.epsilon.unwrap_or(default)
    }

    pub fn tol_or(&self, default: f64) -> f64 {
        self.settings.tol.unwrap_or(default)
    }

    pub fn seed(&self) -> u64 {
        self.settings.seed.unwrap_or(0)
    }

    pub fn quad_order(&self) -> usize {
        self.settings
            .quad_order
            .unwrap_or(sk_tap::quad::DEFAULT_ORDER)
    }
}
