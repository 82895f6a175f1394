use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use maglab::cli::{run, Command, ExperimentConfig, Overrides};

/// Closed magnetic geodesics on a genus-two hyperbolic surface.
#[derive(Parser)]
#[command(name = "maglab", version)]
struct Args {
    #[command(subcommand)]
    command: Sub,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Exit successfully even if some cells fail to converge.
    #[arg(long, global = true)]
    allow_partial: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Integrate one orbit and test it for closure.
    Flow,
    /// Mañé value estimates, τ₊ and τ₊*.
    CriticalValues,
    /// Minimizer and mountain-pass orbits at one energy.
    FindOrbits,
    /// Minimax values over an energy grid.
    Scan,
    /// Quick seeded consistency checks.
    Selftest,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Flow => Command::Flow,
            Sub::CriticalValues => Command::CriticalValues,
            Sub::FindOrbits => Command::FindOrbits,
            Sub::Scan => Command::Scan,
            Sub::Selftest => Command::Selftest,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(jobs) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let loaded = match &args.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    };
    let mut config = match loaded {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    Overrides { seed: args.seed, out: args.out, allow_partial: args.allow_partial }.apply(&mut config);
    match run(args.command.into(), &config) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
