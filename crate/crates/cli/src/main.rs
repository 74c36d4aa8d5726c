//! `renewal`: simulate thinned flows, estimate the original size and gap
//! laws, and run the Monte Carlo presets.
//!
//! Exit codes: 0 success, 2 usage, 3 data or format, 4 estimator failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use renewal_thinning::Error;

#[derive(Debug, Parser)]
#[command(
    name = "renewal",
    version,
    about = "Inversion of Bernoulli-thinned finite renewal processes"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a sampled dataset.
    Simulate(SimulateArgs),
    /// Estimate the flow-size p.m.f. f_W.
    EstimateFw(EstimateFwArgs),
    /// Estimate the inter-renewal CDF F_D by decompounding.
    EstimateFd(EstimateFdArgs),
    /// Classify the stable/explosive regime from data or a model.
    Regime(RegimeArgs),
    /// Run a Monte Carlo preset and write CSV summaries.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Size law: `geometric:C` or `pareto:ALPHA`.
    #[arg(long)]
    pub size: Option<String>,
    /// Gap law: `exp:RATE`.
    #[arg(long)]
    pub gap: Option<String>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Overridden by RENEWAL_SEED when set.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateFwArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub wmax: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap replicates for the simultaneous ‖·‖_l set (0 = off).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// R̂ table destination (default: regime.csv next to --out).
    #[arg(long)]
    pub regime_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateFdArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `s=K` or `s>=K`.
    #[arg(long)]
    pub cond: Option<String>,
    /// Gap index within the conditioned flows (1-based).
    #[arg(long)]
    pub i: Option<usize>,
    /// `T:STEP`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub trunc_tol: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap replicates for the band (0 = off).
    #[arg(long)]
    pub bootstrap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report the isotonic projection of F̂_D instead of the raw estimate.
    #[arg(long)]
    pub isotonic: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Diagnostics destination (default: stderr).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegimeArgs {
    /// Sampled dataset; alternatively give --size and --q.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<String>,
    #[arg(long)]
    pub q: Option<f64>,
    /// Probe range `A:B` (inclusive).
    #[arg(long)]
    pub probe: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// One of fig2, fig3, fig4, fig5_case1, fig5_case2, fig6.
    pub preset: String,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip bootstrap bands in gap presets.
    #[arg(long)]
    pub no_bands: bool,
}

/// A problem with the invocation rather than the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<Error>() {
        return match e {
            Error::InvalidParameter(_) | Error::InvalidPath(_) => 2,
            Error::Io(_) | Error::Format { .. } => 3,
            _ => 4,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 3;
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => config::Config::load(p)?,
        None => config::Config::default(),
    };
    if let Some(jobs) = cfg.pick(cli.jobs, "jobs")? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| UsageError(format!("cannot size the worker pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, &cfg),
        Command::EstimateFw(a) => commands::estimate_fw(a, &cfg),
        Command::EstimateFd(a) => commands::estimate_fd(a, &cfg),
        Command::Regime(a) => commands::regime(a, &cfg),
        Command::Experiment(a) => commands::experiment(a, &cfg),
    }
}
