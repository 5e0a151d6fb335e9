//! `fdlab`: numerical laboratory for fast-diffusion extinction
//! asymptotics.  One subcommand per invocation; configuration comes
//! from a flat key=value file.
//!
//! Exit codes: 0 pass, 2 precondition failure, 3 certificate or
//! acceptance failure, 4 numerical failure.

use clap::{Parser, Subcommand};
use fdlab::io::{exit_code_for, run_subcommand, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fdlab", version, about = "Fast-diffusion extinction asymptotics laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive and print the exponent set for (n, m).
    Exponents { config: PathBuf },
    /// Integrate the linearized radial mode and export r,phi,dphi.
    Phi { config: PathBuf },
    /// Evaluate a sub/supersolution sign certificate.
    BarrierCheck { config: PathBuf },
    /// Evolve the rescaled equation and export snapshots.
    Evolve { config: PathBuf },
    /// Fit decay rates over a sweep of tail exponents.
    RateSweep { config: PathBuf },
    /// Emit the saturating-exponent curves as functions of m.
    Figure1 { config: PathBuf },
    /// Emit the rate continuum curve over the admissible tail range.
    Figure2 { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, path) = match &cli.command {
        Command::Exponents { config } => ("exponents", config),
        Command::Phi { config } => ("phi", config),
        Command::BarrierCheck { config } => ("barrier-check", config),
        Command::Evolve { config } => ("evolve", config),
        Command::RateSweep { config } => ("rate-sweep", config),
        Command::Figure1 { config } => ("figure1", config),
        Command::Figure2 { config } => ("figure2", config),
    };
    match run(name, path) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("fdlab: {err}");
            ExitCode::from(exit_code_for(&err) as u8)
        }
    }
}

fn run(name: &str, path: &PathBuf) -> fdlab::Result<i32> {
    let text = std::fs::read_to_string(path)?;
    let cfg = RunConfig::parse(&text)?;
    let out = run_subcommand(name, &cfg)?;
    for (file, content) in &out.files {
        if let Some(parent) = std::path::Path::new(file).parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(file, content)?;
    }
    if !out.stdout.is_empty() {
        println!("{}", out.stdout);
    }
    Ok(out.exit)
}
