//! `gasadapt`: strategy experiments, adaptive network simulation, oracle
//! checks and cost-model evaluation.
//!
//! Exit status is 0 on success, 1 when a run fails or a tolerance cannot be
//! met, and 2 for invalid arguments or configuration.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gasadapt::{ModelLevel, Strategy};

use crate::manifest::ConfigError;

#[derive(Debug, Parser)]
#[command(
    name = "gasadapt",
    version,
    about = "Adaptive model and mesh refinement for gas networks"
)]
struct Cli {
    /// Directory for CSV outputs and the run manifest.
    #[arg(
        long,
        global = true,
        env = "GASADAPT_OUTPUT_DIR",
        default_value = "gasadapt-out"
    )]
    out: PathBuf,

    /// Cap on worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare the refinement strategies on random synthetic networks.
    Experiment(ExperimentArgs),
    /// Simulate a pipe network adaptively, window by window.
    Simulate(SimulateArgs),
    /// Compare strategy schemes with the exhaustive optimum.
    Oracle(OracleArgs),
    /// Evaluate the cost model for one pipe.
    Cost(CostArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML experiment config, or a manifest.json of an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of random samples.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Seed of the sample generator.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance on the relative network error.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Comma-separated phi values for S2 and S3.
    #[arg(long, value_delimiter = ',')]
    pub phi: Option<Vec<f64>>,
    /// Comma-separated strategies to report (s1, s2, s3).
    #[arg(long, value_delimiter = ',', value_parser = parse_strategy)]
    pub strategies: Option<Vec<Strategy>>,
    /// Also write the cost of every sample and variant.
    #[arg(long)]
    pub per_sample: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Network file (TOML), or a manifest.json of an earlier run.
    pub network: PathBuf,
    /// Refinement strategy (s1, s2, s3).
    #[arg(long, value_parser = parse_strategy)]
    pub strategy: Option<Strategy>,
    /// Fraction of the best option a pipe must reach to be refined.
    #[arg(long)]
    pub phi: Option<f64>,
    /// Relative tolerance; `inf` disables refinement.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Share one time mesh across all pipes.
    #[arg(long)]
    pub uniform_time: bool,
    /// Also run the fine M1 reference and report the error against it.
    #[arg(long)]
    pub reference: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Instance file (TOML) with `[config]` and `[[pipes]]`.
    #[arg(required_unless_present = "batch", conflicts_with = "batch")]
    pub instance: Option<PathBuf>,
    /// Largest number of space or time halvings the oracle tries per pipe.
    #[arg(long, default_value_t = 5)]
    pub depth: u32,
    /// Phi used for S2 and S3 on a single instance.
    #[arg(long, default_value_t = 1.0)]
    pub phi: f64,
    /// Solve this many random instances and write the gap distribution.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seed for batch instances.
    #[arg(long, requires = "batch")]
    pub seed: Option<u64>,
    /// Pipes per batch instance.
    #[arg(long, default_value_t = 2, requires = "batch")]
    pub pipes: usize,
    /// Experiment config supplying the batch sampling ranges.
    #[arg(long, requires = "batch")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Model level (1, 2 or 3).
    #[arg(long, value_parser = parse_level)]
    pub model: ModelLevel,
    /// Spatial nodes of the unrefined mesh.
    #[arg(long)]
    pub n_x: u64,
    /// Temporal nodes of the unrefined mesh.
    #[arg(long)]
    pub n_t: u64,
    /// Spatial halvings.
    #[arg(long, default_value_t = 0)]
    pub r_x: u32,
    /// Temporal halvings.
    #[arg(long, default_value_t = 0)]
    pub r_t: u32,
    /// TOML file with `m1`, `m2`, `m3` cost constants.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::parse(s).ok_or_else(|| format!("unknown strategy `{s}`, expected s1, s2 or s3"))
}

fn parse_level(s: &str) -> Result<ModelLevel, String> {
    let n: u8 = s
        .parse()
        .map_err(|_| format!("model level must be 1, 2 or 3, got `{s}`"))?;
    ModelLevel::from_index(n).map_err(|e| e.to_string())
}

fn exit_status(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err
        .downcast_ref::<gasadapt::Error>()
        .map(gasadapt::Error::root)
    {
        Some(gasadapt::Error::InvalidConfig(_) | gasadapt::Error::Parse { .. }) => 2,
        _ => 1,
    }
}

/// The error chain joined by `: `. Library errors already print their
/// source, so a link that merely repeats the end of the previous one is
/// skipped.
fn message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out += ": ";
        }
        out += &text;
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Experiment(args) => commands::experiment(args, &cli.out),
        Command::Simulate(args) => commands::simulate(args, &cli.out),
        Command::Oracle(args) => commands::oracle(args, &cli.out),
        Command::Cost(args) => commands::cost(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_status(&e))
        }
    }
}
