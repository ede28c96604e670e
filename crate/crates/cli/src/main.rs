//! `spde`: command-line driver for the stochastic advection-diffusion solver.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use config::{NoiseKind, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] spde_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("outside acceptance band: {0}")]
    Band(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(spde_core::Error::Io(_)) | CliError::Io(_) => 1,
            CliError::Core(_) => 2,
            CliError::Band(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spde", version, about = "Finite element solver for semilinear parabolic SPDEs")]
struct Cli {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, overriding `experiment.workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Noise type, overriding `problem.noise`.
    #[arg(long, global = true, value_enum)]
    noise: Option<NoiseKind>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deterministic heat benchmark: spatial and temporal orders.
    HeatCheck,
    /// Darcy pressure and velocity fields.
    Darcy,
    /// Monte Carlo strong convergence in time.
    Converge,
    /// One sample path with periodic snapshots.
    Run,
    /// Print the resolved configuration.
    Config,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.experiment.workers = workers;
    }
    if let Some(noise) = cli.noise {
        cfg.problem.noise = noise;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::HeatCheck => commands::heat_check(&cfg),
        Command::Darcy => commands::darcy(&cfg),
        Command::Converge => commands::converge(&cfg),
        Command::Run => commands::run(&cfg),
        Command::Config => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
