//! Command-line front end for supervised integrative biclustering: fit
//! models from CSV views, predict for new samples, simulate planted data,
//! score recovery, and rerun the benchmark settings.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Options;
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "sib", version, about = "Supervised integrative biclustering")]
pub struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the `out` key).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed (overrides the `seed` key).
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for parallel fits.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Suppress progress messages.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model, selecting penalties and K.
    Fit,
    /// Assign new samples and predict their outcome.
    Predict {
        /// Directory written by `sib fit` (overrides the `model` key).
        #[arg(long, value_name = "DIR")]
        model: Option<PathBuf>,
    },
    /// Simulate planted biclusters with train and test splits.
    Simulate,
    /// Score a fit against planted truth.
    Evaluate {
        /// Directory written by `sib fit`.
        #[arg(long, value_name = "DIR")]
        estimated: Option<PathBuf>,
        /// Split directory written by `sib simulate`.
        #[arg(long, value_name = "DIR")]
        truth: Option<PathBuf>,
    },
    /// Repeat simulate, fit, predict and evaluate on a named setting.
    Reproduce {
        /// g<n>x<p> or b<n>x<p>, e.g. g150x100.
        #[arg(long)]
        setting: Option<String>,
        /// Number of replications.
        #[arg(long)]
        reps: Option<usize>,
    },
}

fn install_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot set up {n} threads: {e}")))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    install_threads(cli.threads)?;
    let opts = Options { config: cli.config, out: cli.out, seed: cli.seed, quiet: cli.quiet };
    match cli.command {
        Command::Fit => commands::fit::run(&opts).map(drop),
        Command::Predict { model } => commands::predict::run(&opts, model).map(drop),
        Command::Simulate => commands::simulate::run(&opts).map(drop),
        Command::Evaluate { estimated, truth } => commands::evaluate::run(&opts, estimated, truth).map(drop),
        Command::Reproduce { setting, reps } => commands::reproduce::run(&opts, setting, reps).map(drop),
    }
}
