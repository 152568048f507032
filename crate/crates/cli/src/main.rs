//! `bandlab` command-line front end.
//!
//! Exit status: 0 on success, 1 for bad input (usage, config, domain, I/O),
//! 2 for numerical failure (divergence, singular operator, no run
//! interpolating). Nothing is left in the output directory on failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use bandlab::config::Config;
use bandlab::Error;
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bandlab", version, about = "Sampling theory of interpolating networks, at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Replaces the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Draw a random band-limited target.
    Generate,
    /// Sample a target on a uniform grid or at random points.
    Sample,
    /// Recover Fourier coefficients from samples.
    Reconstruct,
    /// Train a network to interpolate samples.
    Train,
    /// Spectrum, error and weight-norm audit of a trained network.
    Analyze,
    /// Run an error-scaling, MANOVA or multivariate study.
    Experiment,
}

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn run(cli: &Cli) -> bandlab::Result<Vec<String>> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Domain("--config is required".into()))?;
    let mut cfg = Config::load(path)?;
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let seed_key = match cli.command {
        Command::Experiment => "experiment.seed",
        _ => "seed",
    };
    if let Some(seed) = cli.seed {
        cfg.set(seed_key, seed);
    }
    let ctx = commands::Context { cfg, base };
    let outcome = match cli.command {
        Command::Generate => commands::generate(&ctx),
        Command::Sample => commands::sample(&ctx),
        Command::Reconstruct => commands::reconstruct(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Analyze => commands::analyze(&ctx),
        Command::Experiment => commands::experiment(&ctx),
    }?;
    let written = output::write_all(&cli.out, &outcome.files)?;
    let mut lines = outcome.messages;
    lines.extend(written.iter().map(|p| format!("wrote {}", p.display())));
    Ok(lines)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(lines) => {
            if !cli.quiet {
                for l in lines {
                    println!("{l}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
