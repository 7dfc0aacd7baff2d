//! `kppflow` command line: run experiment configs, check them, or reproduce
//! the acceptance suite.

mod config;
mod error;
mod output;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kppflow::speed::validate_reaction;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Overrides the worker count from the config.
const WORKERS_ENV: &str = "KPPFLOW_WORKERS";

#[derive(Parser)]
#[command(name = "kppflow", version, about = "Front speeds and effective diffusivity in periodic flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Run every acceptance criterion and write a summary table.
    ReproduceAll {
        #[arg(long, default_value = "reproduce-out")]
        out: PathBuf,
        /// Force 16-point grids; criteria needing finer grids are skipped.
        #[arg(long)]
        fast: bool,
    },
    /// Check a config and report on its flow and reaction without solving.
    Validate { config: PathBuf },
}

fn init_workers(from_config: Option<usize>) -> Result<(), CliError> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Config {
            field: WORKERS_ENV.into(),
            message: format!("expected a positive integer, got {v:?}"),
        })?),
        Err(_) => from_config,
    };
    if let Some(n) = workers {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn check_config(path: &Path) -> Result<(), CliError> {
    let cfg = config::load(path)?;
    println!("config ok: mode {:?}", cfg.mode);
    if cfg.flow.is_some() {
        let report = cfg.build_flow()?.validate();
        println!(
            "flow: divergence residual {:.3e}, mean residuals {:?}, max speed {:?}",
            report.div_residual, report.mean_residuals, report.max_speed
        );
    }
    let reaction = validate_reaction(&cfg.reaction.build(), 1000)?;
    for c in &reaction.checks {
        println!(
            "reaction {}: {} (worst s = {:.4}, value {:.3e})",
            c.name,
            if c.passed { "pass" } else { "fail" },
            c.worst_s,
            c.worst_value
        );
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg: ExperimentConfig = config::load(&config)?;
            init_workers(cfg.workers)?;
            run::run_config(&cfg, &config)
        }
        Command::ReproduceAll { out, fast } => {
            init_workers(None)?;
            run::reproduce_all(&out, fast.then_some(16))
        }
        Command::Validate { config } => check_config(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
