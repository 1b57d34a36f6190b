//! Experiment configuration: a TOML file with `[system]`, `[run]` and
//! `[output]` sections. Unknown keys are rejected and physics parameters
//! have no defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hamcurv::entropy::{CurvatureSource, EntropyConfig, LyapunovConfig, UnstableConfig};
use hamcurv::flow::Scheme;
use hamcurv::jacobi::JacobiConfig;
use hamcurv::systems::{
    geodesic2d, mechanical, mechanical_on_metric, CosinePotential, CosineTerm, EuclideanMetric, FlatTorusMetric,
    HyperbolicHalfPlane, Monomial, PolynomialPotential, RoundSphere, SumField, ZeroPotential,
};
use hamcurv::{HamiltonianSystem, LevelSet, Metric2D, PhasePoint, ScalarField, Topology};
use serde::{Deserialize, Serialize};

use crate::Command;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mechanical,
    Geodesic2d,
    MechanicalOnMetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    FlatTorus,
    Hyperbolic,
    Sphere,
}

/// `"unbounded"` or `{ periodic = L }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologySpec {
    Unbounded,
    Periodic(f64),
}

impl From<TopologySpec> for Topology {
    fn from(t: TopologySpec) -> Self {
        match t {
            TopologySpec::Unbounded => Topology::Unbounded,
            TopologySpec::Periodic(l) => Topology::Periodic(l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub family: Family,
    /// Degrees of freedom (mechanical family only; metric families have n = 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricKind>,
    /// Periods of the flat torus metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<[f64; 2]>,
    /// Per-coordinate topology (mechanical family only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<Vec<TopologySpec>>,
    pub energy: f64,
    /// Position window `[lo, hi]` per coordinate for sampling; an empty
    /// entry means the full period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polynomial: Vec<Monomial>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cosine: Vec<CosineTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Derivatives,
    Symplecticity,
    Energy,
    Pairing,
    Riccati,
    TraceInequality,
    Oracle,
    Sampler,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::Derivatives,
        Property::Symplecticity,
        Property::Energy,
        Property::Pairing,
        Property::Riccati,
        Property::TraceInequality,
        Property::Oracle,
        Property::Sampler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Derivatives => "derivatives",
            Property::Symplecticity => "symplecticity",
            Property::Energy => "energy",
            Property::Pairing => "pairing",
            Property::Riccati => "riccati",
            Property::TraceInequality => "trace_inequality",
            Property::Oracle => "oracle",
            Property::Sampler => "sampler",
        }
    }
}

/// Deliberate faults for negative tests of the verify suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Replace the integrator by explicit Euler.
    NonSymplectic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Explicit evaluation points; replace Liouville sampling when given.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<PointSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub renorm_interval: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature_source: Option<CurvatureSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclusion_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstable_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobi: Option<JacobiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unstable: Option<UnstableConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<Vec<Property>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inject: Option<Fault>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "config error at line {l}: {}", self.message),
            None => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Line (1-based) of the first `key = ...` assignment inside `[section]`,
/// or of the `[section]` header when the key is absent.
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section && line.split('=').next().map(str::trim) == Some(key) {
            return Some(i + 1);
        }
    }
    header
}

/// A parsed config with the source text kept for error locations.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub source: String,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { message: format!("cannot read {}: {e}", path.display()), line: None })?;
        Self::parse(&source, path)
    }

    pub fn parse(source: &str, path: &Path) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| source[..s.start].matches('\n').count() + 1);
            ConfigError { message: e.message().to_string(), line }
        })?;
        Ok(Self { config, source: source.to_string(), path: path.to_path_buf() })
    }

    fn err(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { message: message.into(), line: locate(&self.source, section, key) }
    }

    /// Checks everything that can be checked without running the pipeline.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let s = &self.config.system;
        let r = &self.config.run;
        match s.family {
            Family::Mechanical => {
                let n = s.n.ok_or_else(|| self.err("system", "family", "mechanical systems need `n`"))?;
                if n == 0 {
                    return Err(self.err("system", "n", "n must be positive"));
                }
                if s.metric.is_some() {
                    return Err(self.err("system", "metric", "`metric` is not used by the mechanical family"));
                }
                match &s.topology {
                    None => return Err(self.err("system", "family", "mechanical systems need `topology`")),
                    Some(t) if t.len() != n => {
                        return Err(self.err("system", "topology", format!("topology has {} entries, n = {n}", t.len())))
                    }
                    Some(t) => {
                        if t.iter().any(|t| matches!(t, TopologySpec::Periodic(l) if !(*l > 0.0 && l.is_finite()))) {
                            return Err(self.err("system", "topology", "periods must be positive"));
                        }
                    }
                }
            }
            Family::Geodesic2d | Family::MechanicalOnMetric => {
                if s.metric.is_none() {
                    return Err(self.err("system", "family", "metric families need `metric`"));
                }
                if s.n.is_some_and(|n| n != 2) {
                    return Err(self.err("system", "n", "metric families have n = 2"));
                }
                if s.topology.is_some() {
                    return Err(self.err("system", "topology", "the topology of a metric family is fixed by the metric"));
                }
                if s.family == Family::Geodesic2d && !(s.polynomial.is_empty() && s.cosine.is_empty()) {
                    return Err(self.err("system", "family", "geodesic2d takes no potential; use mechanical_on_metric"));
                }
            }
        }
        match (s.metric, s.periods) {
            (Some(MetricKind::FlatTorus), None) => {
                return Err(self.err("system", "metric", "flat_torus needs `periods`"));
            }
            (Some(MetricKind::FlatTorus), Some(p)) if !(p[0] > 0.0 && p[1] > 0.0) => {
                return Err(self.err("system", "periods", "periods must be positive"));
            }
            (m, Some(_)) if m != Some(MetricKind::FlatTorus) => {
                return Err(self.err("system", "periods", "`periods` only applies to the flat_torus metric"));
            }
            _ => {}
        }
        let n = self.dimension();
        for m in &s.polynomial {
            if m.powers.len() != n {
                return Err(self.err("system", "powers", format!("monomial powers need {n} entries")));
            }
        }
        for c in &s.cosine {
            if c.wavevector.len() != n {
                return Err(self.err("system", "wavevector", format!("wavevectors need {n} entries")));
            }
        }
        if !s.energy.is_finite() {
            return Err(self.err("system", "energy", "energy must be finite"));
        }
        if let Some(w) = &s.window {
            if w.len() != n {
                return Err(self.err("system", "window", format!("window has {} entries, n = {n}", w.len())));
            }
            if w.iter().any(|b| !(b.is_empty() || (b.len() == 2 && b[0] < b[1]))) {
                return Err(self.err("system", "window", "each window entry is [] or [lo, hi] with lo < hi"));
            }
        }

        for (i, pt) in r.points.iter().enumerate() {
            if pt.p.len() != n || pt.q.len() != n {
                return Err(self.err("run", "p", format!("point {i} needs {n} momenta and {n} positions")));
            }
        }
        let sampled = r.points.is_empty() || matches!(command, Command::Bound | Command::Verify);
        if sampled {
            match r.samples {
                None => return Err(self.err("run", "samples", format!("`{}` needs `samples`", command.name()))),
                Some(0) => return Err(self.err("run", "samples", "samples must be positive")),
                _ => {}
            }
        }
        if command == Command::Bound && !r.points.is_empty() {
            return Err(self.err("run", "p", "`bound` samples the Liouville measure; explicit points are not allowed"));
        }
        let timed = matches!(command, Command::Lyapunov | Command::Bound | Command::Verify);
        if timed {
            for (key, v) in [("horizon", r.horizon), ("dt", r.dt), ("renorm_interval", r.renorm_interval)] {
                match v {
                    None => return Err(self.err("run", key, format!("`{}` needs `{key}`", command.name()))),
                    Some(x) if !(x > 0.0 && x.is_finite()) => {
                        return Err(self.err("run", key, format!("{key} must be positive")))
                    }
                    _ => {}
                }
            }
            if r.horizon <= r.renorm_interval {
                return Err(self.err("run", "horizon", "horizon must exceed renorm_interval"));
            }
        } else if let Some(h) = r.horizon {
            if !(h > 0.0) {
                return Err(self.err("run", "horizon", "horizon must be positive"));
            }
        }
        if let Some(dt) = r.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(self.err("run", "dt", "dt must be positive"));
            }
        }
        if let Some(c) = r.exclusion_cap {
            if !(0.0..=1.0).contains(&c) {
                return Err(self.err("run", "exclusion_cap", "exclusion_cap must lie in [0, 1]"));
            }
        }
        if let Some(suite) = &r.suite {
            if suite.is_empty() {
                return Err(self.err("run", "suite", "empty suite selection"));
            }
        }
        if command != Command::Verify && (r.suite.is_some() || r.inject.is_some()) {
            return Err(self.err("run", if r.suite.is_some() { "suite" } else { "inject" }, "only `verify` takes a suite"));
        }
        self.entropy_config().validate().map_err(|e| self.err("run", "jacobi", e.to_string()))?;
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self.config.system.family {
            Family::Mechanical => self.config.system.n.unwrap_or(0),
            _ => 2,
        }
    }

    pub fn output_dir(&self, flag: Option<&Path>) -> Option<PathBuf> {
        flag.map(Path::to_path_buf).or_else(|| {
            self.config.output.dir.as_ref().map(|d| match self.path.parent() {
                Some(parent) if d.is_relative() => parent.join(d),
                _ => d.clone(),
            })
        })
    }

    fn potential(&self) -> Arc<dyn ScalarField> {
        let s = &self.config.system;
        let n = self.dimension();
        let mut parts: Vec<Arc<dyn ScalarField>> = Vec::new();
        if !s.polynomial.is_empty() {
            parts.push(Arc::new(PolynomialPotential { n, terms: s.polynomial.clone() }));
        }
        if !s.cosine.is_empty() {
            parts.push(Arc::new(CosinePotential { n, terms: s.cosine.clone() }));
        }
        match parts.len() {
            0 => Arc::new(ZeroPotential { n }),
            1 => parts.pop().expect("one part"),
            _ => Arc::new(SumField(parts)),
        }
    }

    fn metric(&self) -> Arc<dyn Metric2D> {
        let s = &self.config.system;
        match s.metric.expect("validated metric") {
            MetricKind::Euclidean => Arc::new(EuclideanMetric),
            MetricKind::FlatTorus => Arc::new(FlatTorusMetric { periods: s.periods.expect("validated periods") }),
            MetricKind::Hyperbolic => Arc::new(HyperbolicHalfPlane),
            MetricKind::Sphere => Arc::new(RoundSphere),
        }
    }

    pub fn system(&self) -> hamcurv::Result<HamiltonianSystem> {
        let s = &self.config.system;
        match s.family {
            Family::Mechanical => {
                let topology = s.topology.as_ref().expect("validated topology").iter().map(|&t| t.into()).collect();
                mechanical(self.potential(), topology)
            }
            Family::Geodesic2d => Ok(geodesic2d(self.metric())),
            Family::MechanicalOnMetric => mechanical_on_metric(self.metric(), self.potential()),
        }
    }

    pub fn level_set(&self, system: HamiltonianSystem) -> hamcurv::Result<LevelSet> {
        let n = self.dimension();
        let window = match &self.config.system.window {
            Some(w) => w.iter().map(|b| if b.is_empty() { None } else { Some((b[0], b[1])) }).collect(),
            None => vec![None; n],
        };
        LevelSet::new(system, self.config.system.energy, window)
    }

    pub fn explicit_points(&self) -> Vec<PhasePoint> {
        self.config.run.points.iter().map(|pt| PhasePoint::from_slices(&pt.p, &pt.q)).collect()
    }

    /// Library configuration with every unset tuning knob resolved to its
    /// default; this is what the report records.
    pub fn entropy_config(&self) -> EntropyConfig {
        let r = &self.config.run;
        let mut e = EntropyConfig::default();
        if let Some(j) = &r.jacobi {
            e.jacobi = j.clone();
        }
        if let Some(u) = &r.unstable {
            e.unstable = u.clone();
        }
        e.lyapunov = LyapunovConfig { dt: r.dt.unwrap_or(e.lyapunov.dt), scheme: r.scheme, ..e.lyapunov };
        if r.scheme.is_some() && e.jacobi.scheme.is_none() {
            e.jacobi.scheme = r.scheme;
        }
        if let Some(s) = r.curvature_source {
            e.curvature_source = s;
        }
        if let Some(x) = r.renorm_interval {
            e.renorm_interval = x;
        }
        if let Some(x) = r.exclusion_cap {
            e.exclusion_cap = x;
        }
        if let Some(x) = r.unstable_horizon {
            e.unstable_horizon = x;
        }
        if let Some(x) = r.diagnostic_samples {
            e.diagnostic_samples = x;
        }
        if let Some(x) = r.diagnostic_horizon {
            e.diagnostic_horizon = x;
        }
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HYPERBOLIC: &str = r#"
[system]
family = "geodesic2d"
metric = "hyperbolic"
energy = 0.5
window = [[-1.0, 1.0], [0.5, 2.0]]

[run]
seed = 1
samples = 4
horizon = 20.0
dt = 1e-3
renorm_interval = 0.5

[output]
dir = "out"
"#;

    fn parse(s: &str) -> Result<LoadedConfig, ConfigError> {
        LoadedConfig::parse(s, Path::new("cfg.toml"))
    }

    #[test]
    fn round_trip_and_validate() {
        let c = parse(HYPERBOLIC).unwrap();
        c.validate(Command::Bound).unwrap();
        let again: ExperimentConfig = toml::from_str(&toml::to_string(&c.config).unwrap()).unwrap();
        assert_eq!(again, c.config);
        assert_eq!(c.output_dir(None).unwrap(), PathBuf::from("out"));
    }

    #[test]
    fn missing_seed_is_rejected_with_a_line() {
        let e = parse(&HYPERBOLIC.replace("seed = 1\n", "")).unwrap_err();
        assert!(e.message.contains("seed"), "{e}");
        assert!(e.line.is_some());
    }

    #[test]
    fn missing_samples_points_at_the_run_table() {
        let c = parse(&HYPERBOLIC.replace("samples = 4\n", "")).unwrap();
        let e = c.validate(Command::Bound).unwrap_err();
        assert_eq!(e.line, Some(8));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let e = parse(&HYPERBOLIC.replace("seed = 1", "seed = 1\nsead = 2")).unwrap_err();
        assert!(e.message.contains("sead"), "{e}");
        assert_eq!(e.line, Some(10));
    }

    #[test]
    fn horizon_below_interval_points_at_horizon() {
        let c = parse(&HYPERBOLIC.replace("horizon = 20.0", "horizon = 0.2")).unwrap();
        let e = c.validate(Command::Lyapunov).unwrap_err();
        assert_eq!(e.line, Some(11));
        // Curvature does not need the horizon to exceed the interval.
        c.validate(Command::Curvature).unwrap();
    }

    #[test]
    fn topology_parses_both_forms() {
        let src = r#"
[system]
family = "mechanical"
n = 2
topology = ["unbounded", { periodic = 6.5 }]
energy = 1.0
[run]
seed = 3
samples = 1
"#;
        let c = parse(src).unwrap();
        assert_eq!(c.config.system.topology.as_ref().unwrap()[1], TopologySpec::Periodic(6.5));
        c.validate(Command::Curvature).unwrap();
        assert!(c.output_dir(None).is_none());
    }
}
