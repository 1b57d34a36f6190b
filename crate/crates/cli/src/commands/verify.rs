//! The invariant suite behind `hamcurv verify`.

use hamcurv::entropy::{
    linear_system_flow, lyapunov_spectrum, reduced_operator, riccati_integrate, trace_inequality, CurvatureSource,
    LyapunovConfig, LyapunovSpectrum, RiccatiConfig,
};
use hamcurv::flow::{flow, step_with_tangent, IntegratorConfig, Scheme};
use hamcurv::linalg::{mean_stderr, sym_sqrt, symmetrize};
use hamcurv::systems::derivative_consistency;
use hamcurv::{standard_form, HamiltonianSystem, PhasePoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::{points, Outcome};
use crate::config::{Fault, LoadedConfig, Property};
use crate::output::{columns, num, opt, padded, point_cells, point_columns, Table};
use crate::Status;

pub const DERIVATIVE_TOL: f64 = 1e-6;
pub const SYMPLECTIC_TOL: f64 = 1e-8;
pub const ENERGY_TOL: f64 = 1e-6;
pub const PAIRING_TOL: f64 = 1e-3;
pub const RICCATI_TOL: f64 = 1e-6;
pub const TRACE_TOL: f64 = 1e-10;
pub const EQUALITY_TOL: f64 = 1e-8;
pub const ORACLE_TOL: f64 = 1e-4;
pub const LEVEL_TOL: f64 = 1e-10;
/// Points followed over the full horizon by the energy and pairing checks.
const LONG_RUNS: usize = 2;

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub property: Property,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct VerifyOutcome {
    pub properties: Vec<PropertyResult>,
    pub samples: Table,
    pub convergence: Table,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn into_outcome(self) -> Outcome {
        let lines = self
            .properties
            .iter()
            .map(|p| {
                format!(
                    "{} {}: {} (tolerance {}) {}",
                    if p.passed { "PASS" } else { "FAIL" },
                    p.property.name(),
                    num(p.value),
                    num(p.tolerance),
                    p.detail
                )
            })
            .collect();
        let failed: Vec<&str> = self.properties.iter().filter(|p| !p.passed).map(|p| p.property.name()).collect();
        let (status, error) = if failed.is_empty() {
            (Status::Ok, None)
        } else {
            (Status::NumericalFailure, Some(format!("failed properties: {}", failed.join(", "))))
        };
        Outcome {
            status,
            error,
            result: json!({ "passed": failed.is_empty(), "properties": self.properties }),
            samples: self.samples,
            convergence: self.convergence,
            lines,
        }
    }
}

fn result(property: Property, value: f64, tolerance: f64, detail: impl Into<String>) -> PropertyResult {
    PropertyResult { property, passed: value <= tolerance, value, tolerance, detail: detail.into() }
}

fn failure(property: Property, tolerance: f64, e: &hamcurv::Error) -> PropertyResult {
    PropertyResult { property, passed: false, value: f64::INFINITY, tolerance, detail: e.to_string() }
}

struct Suite<'a> {
    system: HamiltonianSystem,
    points: Vec<PhasePoint>,
    config: &'a LoadedConfig,
    integrator: IntegratorConfig,
    lyapunov: LyapunovConfig,
}

/// Per-point columns of samples.csv.
#[derive(Debug, Default, Clone)]
struct PointChecks {
    derivative_error: Option<f64>,
    symplectic_defect: Option<f64>,
    oracle_delta: Option<f64>,
    level_error: Option<f64>,
    energy_drift: Option<f64>,
    pairing_defect: Option<f64>,
}

/// `‖MᵀJM − J‖ / max(1, ‖M‖²)` for the tangent map over one time unit.
fn symplectic_defect(system: &HamiltonianSystem, z: &PhasePoint, cfg: &IntegratorConfig) -> hamcurv::Result<f64> {
    let steps = ((1.0 / cfg.dt).round() as usize).clamp(1, 1000);
    let dim = 2 * system.n();
    let mut m = DMatrix::identity(dim, dim);
    let mut cur = z.clone();
    for _ in 0..steps {
        let (w, s) = step_with_tangent(system, &cur, cfg.dt, cfg)?;
        m = s * m;
        cur = w;
    }
    let j = standard_form(system.n()).form().clone();
    Ok((m.transpose() * &j * &m - &j).norm() / m.norm_squared().max(1.0))
}

fn oracle_delta(system: &HamiltonianSystem, z: &PhasePoint, config: &LoadedConfig) -> hamcurv::Result<f64> {
    let jc = config.entropy_config().jacobi;
    let got = reduced_operator(system, z, CurvatureSource::Pipeline, &jc)?.eigenvalues;
    let reference = reduced_operator(system, z, CurvatureSource::ClosedForm, &jc)?.eigenvalues;
    let scale = reference.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    Ok(got.iter().zip(reference.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale)
}

impl Suite<'_> {
    fn per_point(&self, property: Property, checks: &mut [PointChecks]) -> PropertyResult {
        let f = |z: &PhasePoint| -> hamcurv::Result<f64> {
            match property {
                Property::Derivatives => derivative_consistency(&self.system, z, 1e-5),
                Property::Symplecticity => symplectic_defect(&self.system, z, &self.integrator),
                Property::Oracle => oracle_delta(&self.system, z, self.config),
                _ => unreachable!("not a per-point property"),
            }
        };
        let tol = match property {
            Property::Derivatives => DERIVATIVE_TOL,
            Property::Symplecticity => SYMPLECTIC_TOL,
            _ => ORACLE_TOL,
        };
        let values: Vec<hamcurv::Result<f64>> = self.points.par_iter().map(f).collect();
        let mut worst = 0.0f64;
        for (c, v) in checks.iter_mut().zip(&values) {
            let v = match v {
                Ok(v) => *v,
                Err(e) => return failure(property, tol, e),
            };
            worst = worst.max(v);
            match property {
                Property::Derivatives => c.derivative_error = Some(v),
                Property::Symplecticity => c.symplectic_defect = Some(v),
                _ => c.oracle_delta = Some(v),
            }
        }
        let detail = match property {
            Property::Symplecticity => format!("{:?} over one time unit at {} points", self.integrator.scheme, values.len()),
            _ => format!("{} points", values.len()),
        };
        result(property, worst, tol, detail)
    }

    fn energy(&self, checks: &mut [PointChecks]) -> PropertyResult {
        let horizon = self.config.config.run.horizon.expect("validated horizon");
        let energy = self.config.config.system.energy;
        let long: Vec<&PhasePoint> = self.points.iter().take(LONG_RUNS).collect();
        let drifts: Vec<hamcurv::Result<f64>> =
            long.par_iter().map(|z| flow(&self.system, z, horizon, &self.integrator).map(|t| t.energy_drift)).collect();
        let scale = if energy != 0.0 { energy.abs() } else { 1.0 };
        let mut worst = 0.0f64;
        for (c, d) in checks.iter_mut().zip(&drifts) {
            match d {
                Ok(d) => {
                    c.energy_drift = Some(*d);
                    worst = worst.max(d / scale);
                }
                Err(e) => return failure(Property::Energy, ENERGY_TOL, e),
            }
        }
        result(Property::Energy, worst, ENERGY_TOL, format!("relative drift over T = {horizon}"))
    }

    fn pairing(&self, checks: &mut [PointChecks], convergence: &mut Option<LyapunovSpectrum>) -> PropertyResult {
        let run = &self.config.config.run;
        let horizon = run.horizon.expect("validated horizon");
        let interval = run.renorm_interval.expect("validated interval");
        let long: Vec<&PhasePoint> = self.points.iter().take(LONG_RUNS).collect();
        let spectra: Vec<hamcurv::Result<LyapunovSpectrum>> =
            long.par_iter().map(|z| lyapunov_spectrum(&self.system, z, horizon, interval, &self.lyapunov)).collect();
        let mut worst = 0.0f64;
        for (c, s) in checks.iter_mut().zip(&spectra) {
            match s {
                Ok(s) => {
                    c.pairing_defect = Some(s.pairing_defect);
                    worst = worst.max(s.pairing_defect);
                }
                Err(e) => return failure(Property::Pairing, PAIRING_TOL, e),
            }
        }
        *convergence = spectra.into_iter().next().and_then(|s| s.ok());
        result(Property::Pairing, worst, PAIRING_TOL, format!("max |lambda_i + lambda_(2n+1-i)| at T = {horizon}"))
    }

    fn sampler(&self, checks: &mut [PointChecks]) -> PropertyResult {
        let energy = self.config.config.system.energy;
        let mut worst = 0.0f64;
        for (c, z) in checks.iter_mut().zip(&self.points) {
            match self.system.energy(z) {
                Ok(h) => {
                    c.level_error = Some((h - energy).abs());
                    worst = worst.max((h - energy).abs());
                }
                Err(e) => return failure(Property::Sampler, LEVEL_TOL, &e),
            }
        }
        if worst > LEVEL_TOL || !self.config.config.run.points.is_empty() {
            return result(Property::Sampler, worst, LEVEL_TOL, "max |h - E| on the samples");
        }
        // Flow invariance: bounded observables before and after time 1,
        // measured in standard errors (passes below 4).
        let n = self.system.n();
        let moved: Vec<hamcurv::Result<PhasePoint>> =
            self.points.par_iter().map(|z| flow(&self.system, z, 1.0, &self.integrator).map(|t| t.last().clone())).collect();
        let moved: Vec<PhasePoint> = match moved.into_iter().collect() {
            Ok(m) => m,
            Err(e) => return failure(Property::Sampler, 4.0, &e),
        };
        let observables: [&dyn Fn(&PhasePoint) -> f64; 4] = [
            &|z| z.q[0].cos(),
            &|z| (z.q[0] + z.q[n - 1]).sin(),
            &|z| z.p[0].tanh(),
            &|z| (z.p[n - 1] * z.q[0]).cos(),
        ];
        let mut sigmas = 0.0f64;
        for f in observables {
            let a: Vec<f64> = self.points.iter().map(f).collect();
            let b: Vec<f64> = moved.iter().map(f).collect();
            let (ma, sa) = mean_stderr(&a);
            let (mb, sb) = mean_stderr(&b);
            let se = (sa * sa + sb * sb).sqrt();
            let s = if se > 0.0 { (ma - mb).abs() / se } else if ma == mb { 0.0 } else { f64::INFINITY };
            sigmas = sigmas.max(s);
        }
        result(
            Property::Sampler,
            sigmas,
            4.0,
            format!("observable shift under the time-1 flow in standard errors; max |h - E| = {}", num(worst)),
        )
    }
}

/// Scalar analytics and seeded comparisons with the linear system.
pub fn riccati_check(seed: u64) -> PropertyResult {
    let cfg = RiccatiConfig::default();
    let mut worst = 0.0f64;
    let constant = |c: f64| move |_t: f64| Ok(DMatrix::from_element(1, 1, c));
    match riccati_integrate(&mut constant(-1.0), &DMatrix::zeros(1, 1), (0.0, 5.0), &cfg) {
        Ok(s) => worst = worst.max((s.v[(0, 0)] - 5.0f64.tanh()).abs()),
        Err(e) => return failure(Property::Riccati, RICCATI_TOL, &e),
    }
    match riccati_integrate(&mut constant(1.0), &DMatrix::zeros(1, 1), (0.0, 3.0), &cfg) {
        Ok(s) if s.blowup_flag && s.t > 1.5 && s.t < 1.6 => {}
        Ok(s) => {
            return PropertyResult {
                property: Property::Riccati,
                passed: false,
                value: s.t,
                tolerance: RICCATI_TOL,
                detail: format!("R = +1 blowup expected in (1.5, 1.6), got flag {} at t = {}", s.blowup_flag, s.t),
            }
        }
        Err(e) => return failure(Property::Riccati, RICCATI_TOL, &e),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..6 {
        let k = 1 + case % 3;
        let a = symmetrize(&DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0)));
        let b = symmetrize(&DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0)));
        let w = rng.random_range(0.5..3.0);
        let c = DMatrix::from_fn(k, k, |_, _| rng.random_range(-0.5..0.5));
        let v0 = c.transpose() * &c;
        let mut r = |t: f64| Ok(&a - DMatrix::identity(k, k) + &b * (w * t).sin());
        let s = match riccati_integrate(&mut r, &v0, (0.0, 1.0), &cfg) {
            Ok(s) if !s.blowup_flag => s,
            Ok(_) => continue,
            Err(e) => return failure(Property::Riccati, RICCATI_TOL, &e),
        };
        let (xi, eta) = match linear_system_flow(&mut r, &DMatrix::identity(k, k), &-&v0, (0.0, 1.0), &cfg) {
            Ok(x) => x,
            Err(e) => return failure(Property::Riccati, RICCATI_TOL, &e),
        };
        let Some(xinv) = xi.try_inverse() else { continue };
        let lin = -(eta * xinv);
        worst = worst.max((&s.v - &lin).norm() / lin.norm().max(1.0));
    }
    result(Property::Riccati, worst, RICCATI_TOL, "tanh(5), blowup in (1.5, 1.6), 6 seeded R(t) against the linear system")
}

/// Random triples never violate the inequality, and equality triples reach it.
pub fn trace_check(seed: u64, triples: usize) -> PropertyResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psd = |rng: &mut ChaCha8Rng, k: usize, rank: usize| {
        let a = DMatrix::from_fn(k, rank, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose()
    };
    let mut violation = 0.0f64;
    for i in 0..triples {
        let k = 1 + i % 6;
        let rank = rng.random_range(0..=k);
        let m = psd(&mut rng, k, rank);
        let n = psd(&mut rng, k, k);
        let u = psd(&mut rng, k, k) + DMatrix::identity(k, k) * 0.05;
        match trace_inequality(&m, &n, &u) {
            Ok(t) => violation = violation.max(t.rhs - t.lhs),
            Err(e) => return failure(Property::TraceInequality, TRACE_TOL, &e),
        }
    }
    let mut defect = 0.0f64;
    for i in 0..triples / 5 {
        let k = 1 + i % 6;
        let q = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0)).qr().q();
        let dm = DVector::from_fn(k, |_, _| rng.random_range(0.1..3.0));
        let dn = DVector::from_fn(k, |_, _| rng.random_range(0.1..3.0));
        let m = &q * DMatrix::from_diagonal(&dm) * q.transpose();
        let n = &q * DMatrix::from_diagonal(&dn) * q.transpose();
        let Some(inv) = sym_sqrt(&m).try_inverse() else { continue };
        let u = symmetrize(&(sym_sqrt(&n) * inv));
        match trace_inequality(&m, &n, &u) {
            Ok(t) => defect = defect.max(t.equality_defect),
            Err(e) => return failure(Property::TraceInequality, TRACE_TOL, &e),
        }
    }
    let passed = violation <= TRACE_TOL && defect <= EQUALITY_TOL;
    PropertyResult {
        property: Property::TraceInequality,
        passed,
        value: violation.max(0.0),
        tolerance: TRACE_TOL,
        detail: format!("{triples} random triples; equality defect {} (tolerance {})", num(defect), num(EQUALITY_TOL)),
    }
}

pub(super) fn run(config: &LoadedConfig) -> hamcurv::Result<VerifyOutcome> {
    let system = config.system()?;
    let pts = points(config, &system)?;
    let run = &config.config.run;
    let mut lyapunov = config.entropy_config().lyapunov;
    let mut integrator = lyapunov.integrator(&system)?;
    if run.inject == Some(Fault::NonSymplectic) {
        integrator = IntegratorConfig::new(Scheme::ExplicitEuler, integrator.dt)?;
        lyapunov.scheme = Some(Scheme::ExplicitEuler);
    }
    let suite = Suite { system, points: pts, config, integrator, lyapunov };
    let selected = run.suite.clone().unwrap_or_else(|| Property::ALL.to_vec());
    let mut checks = vec![PointChecks::default(); suite.points.len()];
    let mut spectrum = None;
    let mut properties = Vec::new();
    for p in selected {
        properties.push(match p {
            Property::Derivatives | Property::Symplecticity | Property::Oracle => suite.per_point(p, &mut checks),
            Property::Energy => suite.energy(&mut checks),
            Property::Pairing => suite.pairing(&mut checks, &mut spectrum),
            Property::Riccati => riccati_check(run.seed),
            Property::TraceInequality => trace_check(run.seed, 1000),
            Property::Sampler => suite.sampler(&mut checks),
        });
    }

    let n = suite.system.n();
    let mut header = point_columns(n);
    header.extend(
        ["derivative_error", "symplectic_defect", "oracle_delta", "level_error", "energy_drift", "pairing_defect"]
            .map(String::from),
    );
    let mut samples = Table::new(header);
    for (i, (z, c)) in suite.points.iter().zip(&checks).enumerate() {
        let mut cells = point_cells(i, z.p.as_slice(), z.q.as_slice());
        cells.extend(
            [c.derivative_error, c.symplectic_defect, c.oracle_delta, c.level_error, c.energy_drift, c.pairing_defect]
                .map(opt),
        );
        samples.push(cells);
    }
    let mut header = vec!["t".to_string()];
    header.extend(columns("lambda", 2 * (n - 1)));
    let mut convergence = Table::new(header);
    if let Some(s) = spectrum {
        for (t, ex) in &s.convergence_history {
            let mut row = vec![num(*t)];
            row.extend(padded(Some(ex), 2 * (n - 1)));
            convergence.push(row);
        }
    }
    Ok(VerifyOutcome { properties, samples, convergence })
}
