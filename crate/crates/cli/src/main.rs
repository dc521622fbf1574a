//! `wgamp` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 the solver did
//! not converge.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "wgamp",
    version,
    about = "Weighted Bernoulli-Gauss GAMP: solve, sweep, fit, generate and plot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output file.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Override one configuration value, e.g. `--set gamp.damping=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// More progress output on standard error (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Reconstruct one problem and write the estimate as JSON.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Seed of the generated problem (with `generate` in the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Learn the prior and noise parameters by EM.
        #[arg(long)]
        em: bool,
    },
    /// Run a phase-transition sweep and write the results CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Base seed of the sweep.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Keep finished cells of an existing output file and run only the rest.
        #[arg(long)]
        resume: bool,
    },
    /// Fit transition curves to a results CSV.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Results CSV written by `sweep`.
        results: PathBuf,
    },
    /// Generate a synthetic problem file.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw curves CSVs as SVG, plus a long-format CSV next to it.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Curves CSVs, each optionally prefixed with `label=`.
        #[arg(required = true)]
        curves: Vec<String>,
        /// Reference curve CSV with columns `delta,rho`, optionally `label=path`.
        #[arg(long = "reference", value_name = "[LABEL=]PATH")]
        references: Vec<String>,
    },
}

pub enum Status {
    Ok,
    NotConverged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Solve { common, seed, em } => commands::solve(&common, seed, em),
        Command::Sweep {
            common,
            seed,
            threads,
            resume,
        } => commands::sweep(&common, seed, threads, resume),
        Command::Fit { common, results } => commands::fit(&common, &results),
        Command::Gen { common, seed } => commands::gen(&common, seed),
        Command::Plot {
            common,
            curves,
            references,
        } => commands::plot(&common, &curves, &references),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
