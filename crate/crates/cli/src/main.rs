//! `cbopt`: command-line front end for budget-constrained binary
//! optimization with conditional Bernoulli policies.
//!
//! Subcommands: `optimize`, `brute-force`, `sample`, `check`. Exit codes:
//! 0 success, 1 failed checks, 2 configuration error, 3 infeasible
//! constraints, 4 objective/bridge failure.

mod artifacts;
mod commands;
mod config;
mod failure;

use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::failure::Failure;

/// Environment variable providing the worker-thread count when `--threads`
/// is not given.
const THREADS_ENV: &str = "CBOPT_THREADS";

#[derive(Parser)]
#[command(
    name = "cbopt",
    version,
    about = "Budget-constrained binary optimization with conditional Bernoulli policies"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run projected stochastic gradient ascent; writes trace and result files.
    Optimize(RunArgs),
    /// Enumerate the feasible set and write the full (index, design, value) table.
    BruteForce(RunArgs),
    /// Draw designs from the configured policy and verify the constraint.
    Sample(RunArgs),
    /// Run the named self-check suite and report pass/fail counts.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run-configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Worker-thread count (overrides CBOPT_THREADS; default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    /// Optional run-configuration file; supplies the suite seed.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker-thread count (overrides CBOPT_THREADS; default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn thread_request(command: &Cmd) -> Option<usize> {
    match command {
        Cmd::Optimize(a) | Cmd::BruteForce(a) | Cmd::Sample(a) => a.threads,
        Cmd::Check(a) => a.threads,
    }
}

/// Sizes the global thread pool: `--threads` wins over `CBOPT_THREADS`;
/// when neither is set, the library default (all cores) stands.
fn configure_threads(requested: Option<usize>) -> Result<(), Failure> {
    let count = match requested {
        Some(n) => Some(n),
        None => match env::var(THREADS_ENV) {
            Ok(text) => Some(text.trim().parse::<usize>().map_err(|_| {
                Failure::config(format!(
                    "{THREADS_ENV} must be a positive integer, got {text:?}"
                ))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = count {
        if n == 0 {
            return Err(Failure::config("thread count must be ≥ 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(command: Cmd) -> Result<u8, Failure> {
    match command {
        Cmd::Optimize(a) => commands::cmd_optimize(&a.config, a.seed, &a.out),
        Cmd::BruteForce(a) => commands::cmd_brute_force(&a.config, &a.out),
        Cmd::Sample(a) => commands::cmd_sample(&a.config, a.seed, &a.out),
        Cmd::Check(a) => commands::cmd_check(a.config.as_deref(), a.seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome =
        configure_threads(thread_request(&cli.command)).and_then(|()| dispatch(cli.command));
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
