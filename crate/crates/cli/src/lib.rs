//! Command-line front end for permutation-tested model selection.
//!
//! `permsel fit`, `permtest` and `select` read a TOML run configuration and a
//! CSV time series; `permsel experiment1` runs the type-I error simulation.
//! Every subcommand writes text and CSV tables plus `provenance.json` into
//! its output directory.

pub mod config;
pub mod error;
pub mod ingest;
pub mod report;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use permsel_core::experiments::{DEFAULT_GRID, DEFAULT_PERMUTATIONS};
use permsel_core::StatisticKind;

use crate::config::Overrides;
use crate::error::{CliError, Result};
use crate::run::{ExperimentOptions, Mode, RunOptions, RunSummary};

pub const THREADS_ENV: &str = "PERMSEL_THREADS";

fn parse_statistic(s: &str) -> std::result::Result<StatisticKind, String> {
    s.parse().map_err(|e: permsel_core::Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "permsel", version, about = "Permutation tests for model selection")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score every model and write coefficients, Cook's distances and forecasts.
    Fit(ConfigArgs),
    /// Single-model permutation tests with Westfall-Young adjusted p-values.
    Permtest(ConfigArgs),
    /// Single-model tests plus the model-selection permutation test.
    Select(ConfigArgs),
    /// Type-I error of best-model testing versus the selection test.
    Experiment1(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of random derangements J.
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Statistics to compute, replacing the config's list.
    #[arg(long, value_delimiter = ',', value_parser = parse_statistic)]
    pub statistic: Vec<StatisticKind>,
    /// Output directory, replacing the config's `output_dir`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long, default_value = "aicc", value_parser = parse_statistic)]
    pub statistic: StatisticKind,
    /// Candidate-set sizes.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID)]
    pub grid: Vec<usize>,
    /// Predictor-pool sizes k for the dependent case.
    #[arg(long = "dependent-k", value_delimiter = ',')]
    pub dependent_k: Vec<usize>,
    /// Skip the independent case.
    #[arg(long)]
    pub no_independent: bool,
    #[arg(long, default_value_t = 256)]
    pub repeats: usize,
    #[arg(long, default_value_t = 20)]
    pub n_outcomes: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, short, default_value = run::DEFAULT_OUTPUT)]
    pub output: PathBuf,
}

impl ConfigArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            config: self.config.clone(),
            overrides: Overrides {
                seed: self.seed,
                permutations: self.permutations,
                statistics: self.statistic.clone(),
            },
            output: self.output.clone(),
        }
    }
}

/// Runs a parsed command line on the current rayon pool.
pub fn execute(command: &Command) -> Result<RunSummary> {
    match command {
        Command::Fit(a) => run::run_config(Mode::Fit, &a.options()),
        Command::Permtest(a) => run::run_config(Mode::PermTest, &a.options()),
        Command::Select(a) => run::run_config(Mode::Select, &a.options()),
        Command::Experiment1(a) => run::run_experiment(&ExperimentOptions {
            grid: a.grid.clone(),
            dependent_k: a.dependent_k.clone(),
            independent: !a.no_independent,
            repeats: a.repeats,
            n_outcomes: a.n_outcomes,
            alpha: a.alpha,
            permutations: a.permutations,
            seed: a.seed,
            statistic: a.statistic,
            output: a.output.clone(),
        }),
    }
}

/// Configures the global thread pool, then runs the command.
pub fn main_with(cli: Cli) -> Result<RunSummary> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    execute(&cli.command)
}
