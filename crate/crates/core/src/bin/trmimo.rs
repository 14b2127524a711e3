use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use trmimo::config::Command;
use trmimo::run::{load, run};
use trmimo::Error;

/// Time-reversal MIMO simulator.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Args {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the file's command: stability, sweep, moments, graphs, rate or neff.
    #[arg(long)]
    command: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(Error::Config(vs)) => {
            eprintln!("invalid configuration:");
            for v in vs {
                eprintln!("  - {v}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn execute(args: Args) -> trmimo::Result<String> {
    let mut spec = load(&args.config)?;
    if let Some(c) = args.command {
        spec.command = c.parse::<Command>()?;
    }
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.channel.seed = s;
    }
    if let Some(w) = args.workers {
        spec.workers = Some(w);
    }
    if let Some(o) = args.out {
        spec.output = o;
    }
    let spec = spec.validated()?;
    Ok(run(&spec)?.summary)
}
