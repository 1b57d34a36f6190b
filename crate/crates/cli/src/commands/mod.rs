mod bound;
mod curvature;
mod lyapunov;
mod verify;

use hamcurv::systems::liouville_sample;
use hamcurv::{Error, HamiltonianSystem, PhasePoint};
use serde_json::{json, Value};

use crate::config::LoadedConfig;
use crate::output::Table;
use crate::{Command, Status};

pub use verify::{PropertyResult, VerifyOutcome};

/// What a command produced, before it is written out.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub error: Option<String>,
    pub result: Value,
    pub samples: Table,
    pub convergence: Table,
    /// Lines printed on stdout.
    pub lines: Vec<String>,
}

impl Outcome {
    fn failed(e: &Error) -> Self {
        Self {
            status: Status::of(e),
            error: Some(e.to_string()),
            result: Value::Null,
            samples: Table::new(vec!["index".into()]),
            convergence: Table::new(vec!["t".into()]),
            lines: Vec::new(),
        }
    }
}

pub fn dispatch(command: Command, config: &LoadedConfig) -> Outcome {
    let run = match command {
        Command::Curvature => curvature::run(config),
        Command::Lyapunov => lyapunov::run(config),
        Command::Bound => bound::run(config),
        Command::Verify => verify::run(config).map(VerifyOutcome::into_outcome),
    };
    run.unwrap_or_else(|e| Outcome::failed(&e))
}

/// Explicit points from the config, or Liouville samples of the level set.
fn points(config: &LoadedConfig, system: &HamiltonianSystem) -> hamcurv::Result<Vec<PhasePoint>> {
    if !config.config.run.points.is_empty() {
        let mut pts = config.explicit_points();
        for z in &mut pts {
            system.wrap(z);
        }
        return Ok(pts);
    }
    let level = config.level_set(system.clone())?;
    let count = config.config.run.samples.expect("validated samples");
    let pts = liouville_sample(&level, count, config.config.run.seed)?;
    if pts.len() != count {
        return Err(Error::SamplerFailed(format!("{} of {count} samples drawn", pts.len())));
    }
    Ok(pts)
}

/// Same rule as the library batches: too many failed points end the run,
/// as a hypothesis violation when those dominate.
fn exclusion_status(total: usize, excluded: usize, hypothesis: usize, cap: f64) -> (Status, Option<String>) {
    if excluded as f64 > cap * total as f64 {
        let e = Error::TooManyExclusions { excluded, total, hypothesis, cap };
        (Status::of(&e), Some(e.to_string()))
    } else {
        (Status::Ok, None)
    }
}

fn estimate(xs: &[f64]) -> Value {
    let (mean, stderr) = hamcurv::linalg::mean_stderr(xs);
    json!({ "mean": mean, "stderr": stderr, "count": xs.len() })
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    xs.into_iter().fold(None, |m, x| Some(m.map_or(x, |m: f64| m.max(x))))
}
