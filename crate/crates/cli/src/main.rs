//! `subthurston <command> --config <path> [--out <path>] [--csv <path>]`
//!
//! Exit codes: 0 success, 2 budget exceeded, 3 invalid config, 4 assumption
//! violation. Failures are reported as a JSON document on stderr.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde_json::json;
use subthurston::error::Error;

use crate::commands::{CsvRow, Output};
use crate::config::Config;

/// Thread count for the internal pool. Results do not depend on it.
const THREADS_VAR: &str = "SUBTHURSTON_THREADS";

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Describe,
    TileMatrix,
    Check,
    Pressure,
    Spectral,
    Gibbs,
    Invariance,
    Derivative,
    Equidistribute,
    Mgf,
    Rate,
    Ldp,
}

#[derive(Debug, Parser)]
#[command(name = "subthurston", version, about = "Subsystems of expanding grid Thurston maps")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Where to write the JSON result (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the convergence table, for commands that have one.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: String,
    reason: String,
}

impl Failure {
    pub fn config(reason: impl Into<String>) -> Self {
        Failure { code: 3, kind: "invalid_config".into(), reason: reason.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure { code: 1, kind: "io".into(), reason: format!("{}: {e}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::BudgetExceeded { .. } => 2,
            Error::InvalidInput(_) | Error::MalformedDigit { .. } => 3,
            _ => 4,
        };
        Failure { code, kind: e.kind().into(), reason: e.to_string() }
    }
}

fn command_name(c: Command) -> String {
    c.to_possible_value().expect("no skipped variants").get_name().to_string()
}

fn sibling(path: &Path, series: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-{series}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{series}"),
    };
    path.with_file_name(name)
}

fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure { code: 1, kind: "io".into(), reason: e.to_string() })?;
    for r in rows {
        w.serialize(r).map_err(|e| Failure { code: 1, kind: "io".into(), reason: e.to_string() })?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().map_err(|_| Failure::config(format!("{THREADS_VAR} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Failure::config(format!("{THREADS_VAR} must be positive")));
        }
        // Fails only when a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let text = fs::read_to_string(&cli.config).map_err(|e| Failure::config(format!("{}: {e}", cli.config.display())))?;
    let cfg = Config::parse(&text)?;
    let name = command_name(cli.command);
    let Output { result, tables } = commands::run(&name, &cfg)?;
    if cli.csv.is_some() && tables.is_empty() {
        return Err(Failure::config(format!("{name} has no convergence table; drop --csv")));
    }
    let doc = json!({ "command": name, "result": result });
    let mut text = serde_json::to_string_pretty(&doc).expect("json values serialize");
    text.push('\n');
    match &cli.out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::io(p, e))?,
        None => print!("{text}"),
    }
    if let Some(path) = &cli.csv {
        for (i, (series, rows)) in tables.iter().enumerate() {
            let p = if i == 0 { path.clone() } else { sibling(path, series) };
            write_csv(&p, rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let doc = json!({ "error": { "kind": f.kind, "reason": f.reason, "exit_code": f.code } });
            eprintln!("{doc}");
            ExitCode::from(f.code)
        }
    }
}
