//! `hedge`: configuration-driven superhedging runs.
//!
//! Exit codes: 0 when the report verdict is PASS, 1 when it is FAIL, 2 for
//! configuration, schema or I/O errors, 3 when the solver itself fails.

mod commands;
mod config;
mod error;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Mode, Overrides, Run};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "hedge", version, about = "Robust superhedging under proportional transaction costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve primal and dual, cross-check both certificates and report the gap.
    Solve(Args),
    /// Write a generated family to family.json.
    Generate(Args),
    /// Decide, model by model, whether a free lunch exists.
    DetectArbitrage(Args),
    /// Validate a saved consistent price system or dual certificate.
    CheckCps(Args),
    /// Fit a martingale inside a node-wise corridor.
    FitSandwich(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's "output".
    #[arg(long)]
    out: Option<PathBuf>,
    /// Transaction cost rate; overrides the config and the family document.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "tol-gap")]
    tol_gap: Option<f64>,
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(&target, e))?;
    tmp.persist(&target).map_err(|e| CliError::io(&target, e.error))?;
    Ok(())
}

fn execute(mode: Mode, args: Args) -> Result<bool, CliError> {
    let overrides = Overrides {
        out: args.out,
        lambda: args.lambda,
        tol_gap: args.tol_gap,
    };
    let run = Run::load(&args.config, mode, overrides)?;
    let outcome = commands::run(&run)?;
    std::fs::create_dir_all(&run.out_dir).map_err(|e| CliError::io(&run.out_dir, e))?;
    for (name, contents) in &outcome.files {
        write_atomic(&run.out_dir, name, contents)?;
    }
    let report = serde_json::to_string_pretty(&outcome.report).expect("json values serialise");
    write_atomic(&run.out_dir, "report.json", &report)?;
    println!("{}", outcome.summary);
    if !outcome.passed() {
        if let Some(reasons) = outcome.report.get("reasons").and_then(|r| r.as_array()) {
            for r in reasons.iter().filter_map(|r| r.as_str()) {
                eprintln!("{r}");
            }
        }
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Solve(a) => (Mode::Solve, a),
        Command::Generate(a) => (Mode::Generate, a),
        Command::DetectArbitrage(a) => (Mode::DetectArbitrage, a),
        Command::CheckCps(a) => (Mode::CheckCps, a),
        Command::FitSandwich(a) => (Mode::FitSandwich, a),
    };
    match execute(mode, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
