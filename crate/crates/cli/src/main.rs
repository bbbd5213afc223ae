//! `rsc`: solvers, the separation check, training, evaluation and beta
//! sweeps from the command line.
//!
//! Exit codes: 0 on success, 1 for invalid input (including usage errors
//! and malformed files), 2 for numerical failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rsc_core::error::RscError;

use crate::config::RobustKind;

#[derive(Parser)]
#[command(name = "rsc", version = output::VERSION, about = "Robust solvers and structural augmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum InstanceKind {
    /// Plain tabular MDP.
    Standard,
    /// Confounded MDP with per-confounder kernels.
    Rsc,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a tabular MDP or confounded MDP file.
    Solve {
        /// Instance JSON; optional when the config has a solver section.
        instance: Option<PathBuf>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_enum)]
        robust: Option<RobustKind>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the full report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare both robust policies on the hard instance.
    #[command(name = "verify-theorem2")]
    VerifyTheorem2 {
        #[arg(long = "T")]
        horizon: Option<usize>,
        #[arg(long)]
        sigma1: Option<f64>,
        #[arg(long)]
        sigma2: Option<f64>,
        /// Sweep sigma2 over 0.55, 0.60, ..., 1.0.
        #[arg(long)]
        grid: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one agent from the config's train section.
    Train {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Print the resolved config and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Evaluate a saved agent on both environment variants.
    Eval {
        config: PathBuf,
        /// Checkpoint stem, without extension.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Return used to normalize the mean.
        #[arg(long)]
        reference: Option<f64>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Train one process per (beta, seed) pair and aggregate the results.
    #[command(name = "sweep-beta")]
    SweepBeta {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Concurrent training processes; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Write the separating hard instance.
    #[command(name = "gen-hard-instance")]
    GenHardInstance {
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, value_enum, default_value = "rsc")]
        kind: InstanceKind,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &RscError) -> u8 {
    match err {
        RscError::NonFinite(_) | RscError::NoConvergence(_) | RscError::Infeasible | RscError::Unbounded => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> rsc_core::error::Result<()> {
    match cli.command {
        Command::Solve { instance, sigma, robust, config, out } => {
            commands::solve(instance, sigma, robust, config, out)
        }
        Command::VerifyTheorem2 { horizon, sigma1, sigma2, grid, config, out } => {
            commands::verify_theorem2(horizon, sigma1, sigma2, grid, config, out)
        }
        Command::Train { config, output_dir, dry_run } => commands::train(&config, output_dir, dry_run),
        Command::Eval { config, checkpoint, episodes, seed, reference, dry_run } => {
            commands::eval(&config, &checkpoint, episodes, seed, reference, dry_run)
        }
        Command::SweepBeta { config, output_dir, jobs, dry_run } => {
            commands::sweep(&config, output_dir, jobs, dry_run)
        }
        Command::GenHardInstance { horizon, kind, out } => commands::gen_hard_instance(horizon, kind, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
