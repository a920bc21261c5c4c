//! `qrun`: spectra, circuit datasets, training runs and benchmark suites.
//!
//! Exit codes: 0 ok, 1 contract error, 2 degenerate but completed,
//! 3 numeric divergence.

mod checkpoint;
mod commands;
mod config;
mod exit;
mod spectrum;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::exit::CliError;

#[derive(Parser)]
#[command(
    name = "qrun",
    version,
    about = "Data re-uploading layers: spectra, datasets, training and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the predicted frequency set of the layer as CSV.
    Spectrum {
        /// Encoding weights, one per upload (comma-separated).
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        w: Vec<f64>,
        /// Number of uploads.
        #[arg(long)]
        n: usize,
        /// Input dimension.
        #[arg(long)]
        d: usize,
        /// Frequency deduplication tolerance.
        #[arg(long, default_value_t = qrun_core::quantum::DEFAULT_TAU)]
        tau: f64,
        /// Seed of the random observable used by the verification fit.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample a dataset from a circuit spec file.
    Simulate {
        spec: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train one model from a run config; writes a checkpoint and metrics.
    Train {
        config: PathBuf,
        #[arg(long, env = "QRUN_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
    /// Run a benchmark suite (rq1, de, ir, ablation).
    Bench {
        suite: String,
        /// Model seeds (comma-separated).
        #[arg(long, value_delimiter = ',', default_values_t = qrun_core::bench::DEFAULT_SEEDS)]
        seeds: Vec<u64>,
        /// Override the epoch count of every run (for quick smoke runs).
        #[arg(long)]
        epochs: Option<usize>,
        /// Restrict to these model labels (comma-separated).
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long, env = "QRUN_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Spectrum {
            w,
            n,
            d,
            tau,
            seed,
            output,
        } => {
            let mut buf = Vec::new();
            let report = spectrum::run(&w, n, d, tau, seed, &mut buf, &mut std::io::stderr())?;
            commands::emit(output.as_deref(), &buf)?;
            let fit = report.fit.map_or("fit skipped".to_string(), |f| {
                format!("fit residual {:e}", f.rms_residual)
            });
            eprintln!(
                "{} frequencies, bound {}, {fit}",
                report.cardinality, report.bound
            );
            Ok(report.code)
        }
        Command::Simulate { spec, output } => commands::simulate(&spec, output.as_deref()),
        Command::Train { config, output_dir } => commands::train(&config, output_dir),
        Command::Bench {
            suite,
            seeds,
            epochs,
            models,
            output_dir,
        } => commands::bench(&suite, &seeds, epochs, &models, output_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::CONTRACT
            } else {
                exit::OK
            });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(e.code)
        }
    }
}
