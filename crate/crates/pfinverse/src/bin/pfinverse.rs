//! Batch driver: `pfinverse <command> --config cfg.json [--out DIR]`.

use clap::{Parser, Subcommand};
use pfinverse::cli::{self, CliOptions, Command};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pfinverse",
    about = "Phase-field tumour growth: simulation, derivative checks, backward reconstruction, stability reports",
    version
)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate the growth system forward and write the run directory.
    Simulate(Common),
    /// Generate a synthetic tumour state (optionally with noise).
    Phantom(Common),
    /// Run a derivative/adjoint/operator-norm/convergence diagnostic.
    Check(Common),
    /// Reconstruct the initial state from a terminal measurement.
    Reconstruct(Common),
    /// Measure the stability constants and emit the report.
    Stability(Common),
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for seed fan-outs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Replace the command's primary seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let (command, common) = match args.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Phantom(c) => (Command::Phantom, c),
        Cmd::Check(c) => (Command::Check, c),
        Cmd::Reconstruct(c) => (Command::Reconstruct, c),
        Cmd::Stability(c) => (Command::Stability, c),
    };
    let opts = CliOptions {
        config: common.config,
        out: common.out,
        jobs: common.jobs,
        seed_override: common.seed_override,
    };
    ExitCode::from(cli::run(command, &opts) as u8)
}
