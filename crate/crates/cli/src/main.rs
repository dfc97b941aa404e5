//! `calatt`: run simulations, single-dataset estimation and bootstrap analyses.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Command, Format, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "calatt", version, about = "ATT estimation: simulations, estimation and bootstrap analyses")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Monte Carlo study over a PS x OR model grid.
    Simulate(Flags),
    /// Every estimator in every cell of the grid on one CSV dataset.
    Estimate(Flags),
    /// Paired bootstrap of an experimental sample against a comparison sample.
    Bootstrap(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Named preset filling keys the config leaves unset.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, value_name = "N", env = "CALATT_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Also write per-replicate or per-resample estimates.
    #[arg(long)]
    long: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match cli.command {
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Estimate(f) => (Command::Estimate, f),
        Sub::Bootstrap(f) => (Command::Bootstrap, f),
    };
    match run(command, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command, flags: Flags) -> anyhow::Result<()> {
    let cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let ov = Overrides {
        preset: flags.preset,
        seed: flags.seed,
        workers: flags.workers,
        out: flags.out,
        format: flags.format,
        long_output: flags.long,
    };
    let plan = config::resolve(command, cfg, ov)?;
    let written = commands::run(&plan)?;
    for f in &written.files {
        println!("{}", f.display());
    }
    if written.failures > 0 {
        eprintln!("{} estimates failed and are recorded in the report", written.failures);
    }
    Ok(())
}
