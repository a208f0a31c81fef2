//! `bellsim` command-line front end.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::FileConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "bellsim", version, about = "Bell-test simulator and analyzer")]
struct Cli {
    /// TOML config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $BELLSIM_OUT_DIR, else ./bellsim-out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for Monte Carlo generation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate click streams, pair them and analyze the coincidences.
    Simulate(SimulateArgs),
    /// Analyze two time-tag files or a coincidence CSV.
    Analyze(AnalyzeArgs),
    /// Decide whether a joint distribution of four ±1 variables exists.
    CheckCoupling(CouplingArgs),
    /// Print, verify and export a built-in scenario.
    Scenario(ScenarioArgs),
    /// List built-in scenarios.
    ListScenarios,
}

/// Where the model comes from.
#[derive(Debug, Args, Default)]
pub struct SourceArgs {
    /// Built-in scenario name (see list-scenarios).
    #[arg(long, conflicts_with = "model")]
    pub scenario: Option<String>,
    /// Model definition file (TOML).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// lhvm-socks: probability that both halves agree.
    #[arg(long)]
    pub p_same: Option<f64>,
    /// lhvm-socks: both stations report the flipped value at setting 2.
    #[arg(long)]
    pub flip_second: bool,
    /// quantum: analyzer angles a1,a2,b1,b2 in radians.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Number of coincidence windows.
    #[arg(long, conflicts_with = "duration_ns")]
    pub windows: Option<u64>,
    /// Run length in nanoseconds.
    #[arg(long)]
    pub duration_ns: Option<u64>,
    /// Coincidence window width in nanoseconds.
    #[arg(long)]
    pub window_ns: Option<u64>,
    /// Setting rule: random, round-robin or fixed:X,Y.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Probability that a click survives detection.
    #[arg(long)]
    pub detection_rate: Option<f64>,
    /// Also write the two time-tag streams.
    #[arg(long)]
    pub write_streams: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Alice's time-tag file.
    #[arg(long, requires = "bob")]
    pub alice: Option<PathBuf>,
    /// Bob's time-tag file.
    #[arg(long, requires = "alice")]
    pub bob: Option<PathBuf>,
    /// Coincidence window width for time-tag input, in nanoseconds.
    #[arg(long)]
    pub window_ns: Option<u64>,
    /// Coincidence CSV (window,x,y,a,b) instead of time tags.
    #[arg(long, conflicts_with_all = ["alice", "bob"])]
    pub coincidences: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CouplingArgs {
    /// Spec file (TOML: correlators, marginals_a, marginals_b, optional settings).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Inline correlators e00,e01,e10,e11.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub correlators: Option<Vec<f64>>,
    /// Inline marginals E(A_x0),E(A_x1) (default 0,0).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub marginals_a: Option<Vec<f64>>,
    /// Inline marginals E(B_y0),E(B_y1) (default 0,0).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub marginals_b: Option<Vec<f64>>,
    /// Use the exact post-selected moments of a scenario or model file.
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario name.
    pub name: Option<String>,
    #[arg(long)]
    pub p_same: Option<f64>,
    #[arg(long)]
    pub flip_second: bool,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub angles: Option<Vec<f64>>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(CliError::config("threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("threads: {e}")))?;
    }
    let out_dir = config::resolve_out_dir(cli.out_dir, file.out_dir.clone());
    match cli.command {
        Command::Simulate(args) => commands::simulate(args, &file, &out_dir),
        Command::Analyze(args) => commands::analyze(args, &file, &out_dir),
        Command::CheckCoupling(args) => commands::check_coupling(args, &file, &out_dir),
        Command::Scenario(args) => commands::scenario(args, &file, &out_dir),
        Command::ListScenarios => {
            commands::list_scenarios();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bellsim: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
