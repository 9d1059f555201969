#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod experiment;
mod report;

use error::CliError;
use experiment::RunOptions;

/// Groundstate sign experiments for radial Schrödinger operators.
#[derive(Debug, Parser)]
#[command(name = "gsp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Grid points per unit length (overrides the config)
    #[arg(long, global = true)]
    grid_scale: Option<f64>,

    /// Seed for randomized spot checks
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Turn a sweep.csv into gsp_curve.csv and blowup_curve.csv
    Report {
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let outcome = experiment::run(&RunOptions {
                config,
                out,
                grid_scale: cli.grid_scale,
                seed: cli.seed,
            })?;
            println!(
                "wrote {} row(s) to {} ({} certificate failure(s))",
                outcome.rows,
                outcome.output_dir.display(),
                outcome.certificate_failures
            );
            if outcome.certificate_failures > 0 {
                return Err(CliError::CertificateFailed(outcome.certificate_failures));
            }
        }
        Command::Report { sweep, out } => {
            let n = report::report(&sweep, &out)?;
            println!("wrote {n} curve row(s) to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
