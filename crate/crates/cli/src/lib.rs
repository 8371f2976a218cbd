//! Config-driven runner for the `qfsim-core` experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

use config::{parse_config, Experiment};
use experiments::{run_experiment, RunError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ASSERT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "qfsim", version, about = "Quantum filtering and feedback experiments")]
struct Cli {
    experiment: Experiment,
    #[arg(long)]
    config: PathBuf,
    /// Exit with status 4 if any reported metric misses its bound.
    #[arg(long)]
    assert: bool,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `numerics.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

/// Parses `args` (program name first), runs the experiment and returns the
/// process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let mut cfg = match parse_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.numerics.seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match run_experiment(&cfg, cli.experiment, &out) {
        Ok(report) => {
            for m in &report.metrics {
                let verdict = if m.pass { "ok" } else { "FAIL" };
                println!("{:<24} {:>14.6e}  bound {:>10.3e}  {verdict}", m.name, m.value, m.bound);
            }
            if cli.assert && !report.all_pass() {
                EXIT_ASSERT
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                RunError::Config(_) => EXIT_CONFIG,
                RunError::Numeric(_) => EXIT_NUMERIC,
                RunError::Other(_) => EXIT_OTHER,
            }
        }
    }
}
