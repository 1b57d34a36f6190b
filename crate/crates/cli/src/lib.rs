//! Experiment runner behind the `hamcurv` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::LoadedConfig;
use crate::output::{Metadata, Report};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Reduced curvature at sampled or given points, against the closed forms.
    Curvature,
    /// Lyapunov spectra at sampled or given points.
    Lyapunov,
    /// Curvature bound against the Pesin sum on Liouville samples.
    Bound,
    /// Invariant suite with one pass/fail line per property.
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Curvature => "curvature",
            Command::Lyapunov => "lyapunov",
            Command::Bound => "bound",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hamcurv", version, about = "Curvature of Hamiltonian flows and entropy bounds")]
pub struct Args {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Size of the worker pool for Monte Carlo batches.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Require bit-reproducible reductions. Reductions are always evaluated
    /// in a fixed order, so this only records the request.
    #[arg(long, global = true)]
    pub bit_repro: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ConfigError,
    HypothesisViolation,
    NumericalFailure,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::ConfigError => 2,
            Status::HypothesisViolation => 3,
            Status::NumericalFailure => 4,
        }
    }

    pub fn of(e: &hamcurv::Error) -> Self {
        use hamcurv::Error;
        if e.is_hypothesis_violation() {
            Status::HypothesisViolation
        } else if matches!(e, Error::InvalidInput(_) | Error::DimensionMismatch { .. }) {
            Status::ConfigError
        } else {
            Status::NumericalFailure
        }
    }
}

/// Runs one command and returns the process exit code.
pub fn run(args: &Args) -> i32 {
    let started = Instant::now();
    let Some(path) = &args.config else {
        eprintln!("config error: --config <path> is required");
        return Status::ConfigError.code();
    };
    let loaded = match LoadedConfig::load(path).and_then(|c| c.validate(args.command).map(|_| c)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return Status::ConfigError.code();
        }
    };
    let Some(out) = loaded.output_dir(args.out.as_deref()) else {
        eprintln!("{}: config error: no output directory: set [output] dir or pass --out", path.display());
        return Status::ConfigError.code();
    };
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("cannot create {}: {e}", out.display());
        return Status::ConfigError.code();
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = args.workers {
        if k == 0 {
            eprintln!("config error: --workers must be positive");
            return Status::ConfigError.code();
        }
        pool = pool.num_threads(k);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return Status::NumericalFailure.code();
        }
    };
    let outcome = pool.install(|| commands::dispatch(args.command, &loaded));

    let report = Report {
        tool: "hamcurv",
        version: env!("CARGO_PKG_VERSION"),
        command: args.command.name(),
        config: &loaded.config,
        resolved: serde_json::to_value(loaded.entropy_config()).expect("config serializes"),
        status: outcome.status,
        exit_code: outcome.status.code(),
        error: outcome.error.clone(),
        result: outcome.result,
        metadata: Metadata {
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            elapsed_seconds: started.elapsed().as_secs_f64(),
            workers: pool.current_num_threads(),
            bit_repro: args.bit_repro,
        },
    };
    let written = report
        .write(&out.join("report.json"))
        .and_then(|_| outcome.samples.write(&out.join("samples.csv")))
        .and_then(|_| outcome.convergence.write(&out.join("convergence.csv")));
    if let Err(e) = written {
        eprintln!("cannot write outputs to {}: {e}", out.display());
        return Status::NumericalFailure.code();
    }
    for line in &outcome.lines {
        println!("{line}");
    }
    if let Some(e) = &outcome.error {
        eprintln!("{}: {e}", args.command.name());
    }
    outcome.status.code()
}
