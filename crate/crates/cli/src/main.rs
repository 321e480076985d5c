//! `adcg`: run experiments, generate synthetic datasets and score estimates.
//!
//! Exit status is 0 on success, 1 when a solve finished but some weight
//! subproblem or support reduction reported a numerical warning, and 2 on
//! I/O, parse, configuration or usage errors. Errors are printed to stderr
//! as a single JSON object.

use std::path::PathBuf;
use std::process::ExitCode;

use adcg_core::bench::experiment::{run_experiment, DEFAULT_RADII_NM};
use adcg_core::bench::score::{score_f1_files, score_rmse_files, score_sysid_files};
use adcg_core::bench::synth::{generate, DatasetKind};
use adcg_core::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

#[derive(Parser)]
#[command(name = "adcg", version, about = "Conditional gradient solvers for sparse inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver variant listed in an experiment config.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic dataset and a matching config into a directory.
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare an estimate file against ground truth.
    Score {
        #[arg(long, value_enum)]
        kind: ScoreKind,
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Matching radius in nm (f1 only); defaults to 10, 20, ..., 100.
        #[arg(long, allow_negative_numbers = true)]
        radius: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Twosource,
    Lowrank,
    Lti,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreKind {
    F1,
    Rmse,
    Sysid,
}

const EXIT_WARNING: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn fail(err: &Error) -> ExitCode {
    let mut body = json!({ "error": err.kind(), "message": err.to_string() });
    if let Some(path) = err.path() {
        body["path"] = json!(path.display().to_string());
    }
    eprintln!("{body}");
    ExitCode::from(EXIT_ERROR)
}

fn print(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn solve(config: PathBuf) -> Result<ExitCode, Error> {
    let summary = run_experiment(&config)?;
    print(&serde_json::to_value(&summary).expect("summary serializes"));
    if summary.has_warning() {
        eprintln!("{}", json!({ "warning": "numerical warning in at least one run; see summary.json" }));
        return Ok(ExitCode::from(EXIT_WARNING));
    }
    Ok(ExitCode::SUCCESS)
}

fn score(kind: ScoreKind, est: PathBuf, truth: PathBuf, radius: Option<f64>) -> Result<ExitCode, Error> {
    let value = match kind {
        ScoreKind::F1 => {
            let radii = match radius {
                Some(r) if r.is_nan() || r < 0.0 => return Err(Error::InvalidInput(format!("radius must be nonnegative, got {r}"))),
                Some(r) => vec![r],
                None => DEFAULT_RADII_NM.to_vec(),
            };
            json!({ "kind": "f1", "scores": score_f1_files(&est, &truth, &radii)? })
        }
        ScoreKind::Rmse => json!({ "kind": "rmse", "rmse": score_rmse_files(&est, &truth)? }),
        ScoreKind::Sysid => json!({ "kind": "sysid", "score": score_sysid_files(&est, &truth)? }),
    };
    print(&value);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let rendered = e.render().to_string();
            let message = rendered
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:") && !l.starts_with("For more information"))
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            let message = message.trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": message }));
            return ExitCode::from(EXIT_ERROR);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let outcome = match cli.command {
        Command::Solve { config } => solve(config),
        Command::Generate { kind, out, seed } => {
            let kind = match kind {
                Kind::Twosource => DatasetKind::Twosource,
                Kind::Lowrank => DatasetKind::Lowrank,
                Kind::Lti => DatasetKind::Lti,
            };
            generate(kind, &out, seed).map(|config| {
                print(&json!({ "config": config.display().to_string() }));
                ExitCode::SUCCESS
            })
        }
        Command::Score { kind, est, truth, radius } => score(kind, est, truth, radius),
    };
    outcome.unwrap_or_else(|e| fail(&e))
}
