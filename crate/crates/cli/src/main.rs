//! `qsm`: run sawtooth-map noise experiments from a config file.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::commands::{run, CliError, RunOptions};
use crate::config::RawConfig;
use crate::output::Format;

#[derive(Parser, Debug)]
#[command(name = "qsm", version, about = "Quantum sawtooth map noise laboratory")]
struct Args {
    /// Run configuration (`key = value` with `[section]` headers, or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qsm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = RawConfig::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(s) = args.seed {
        cfg.set("", "seed", s.to_string());
    }
    run(&cfg, &RunOptions { out: args.out.clone(), format: args.format })
}
