//! Command-line front end for `conehit`: JSON configuration in, JSON report
//! and plot-ready CSVs out.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::{execute, run, run_and_write, Invocation, Outputs};
pub use report::{Mode, Report};

#[derive(Debug, Parser)]
#[command(name = "conehit", version, about = "Exact asymptotics for a Brownian motion entering an orthant")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quadratic program, g analysis and C_I; H_I only when it is exact.
    Analyze(RunArgs),
    /// Adds a Monte Carlo estimate of H_I.
    Estimate(RunArgs),
    /// Adds direct simulation of the hitting probability and passage time.
    Validate(RunArgs),
    /// Compares the pipeline with every applicable closed form.
    Oracle(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configuration's worker count.
    #[arg(long, env = "CONEHIT_WORKERS")]
    pub workers: Option<usize>,
}

impl Cli {
    pub fn invocation(self) -> Invocation {
        let (mode, a) = match self.command {
            Command::Analyze(a) => (Mode::Analyze, a),
            Command::Estimate(a) => (Mode::Estimate, a),
            Command::Validate(a) => (Mode::Validate, a),
            Command::Oracle(a) => (Mode::Oracle, a),
        };
        Invocation { mode, config: a.config, out: a.out, seed: a.seed, workers: a.workers }
    }
}

/// Parses arguments, runs, and returns the process exit code. Errors go to
/// stderr as `{"error": {code, module, message}}`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_and_write(&cli.invocation()) {
        Ok(_) => 0,
        Err(e) => {
            let body = serde_json::to_string(&e.envelope()).expect("error envelope serializes");
            eprintln!("{body}");
            e.exit_code()
        }
    }
}
