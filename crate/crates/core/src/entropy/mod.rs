//! Lyapunov spectra, the Riccati equation, and Monte Carlo estimates of both
//! sides of `h_μ ≥ ∫ Tr √(−R̂) dμ`.
//!
//! The entropy side is estimated through Pesin's formula `h_μ = ∫ χ dμ`,
//! with `χ` the sum of the positive Lyapunov exponents. This is an estimator
//! only: it presumes the formula applies, and for non-ergodic flows `∫ χ dμ`
//! aggregates over ergodic components.

pub mod lyapunov;
pub mod riccati;
pub mod trace;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow;
use crate::jacobi::{
    geodesic_closed_form, mechanical_closed_form, mechanical_on_metric_closed_form, reduced_curvature,
    restrict_to_complement, CurvatureKind, CurvatureOperator, JacobiConfig,
};
use crate::linalg;
use crate::systems::{liouville_sample, FamilyTag, HamiltonianSystem, LevelSet, PhasePoint};

pub use lyapunov::{chi_of, lyapunov_spectrum, pairing_defect, LyapunovConfig, LyapunovSpectrum};
pub use riccati::{
    linear_system_flow, riccati_integrate, riccati_path, unstable_riccati, unstable_solution, RiccatiConfig,
    RiccatiPath, RiccatiState, UnstableConfig,
};
pub use trace::{bound_integrand_of, clamp_spectrum, r_full, r_prime, trace_inequality, ClampedSpectrum, TraceInequality};

pub const PESIN_LABEL: &str = "entropy (Pesin sum)";
pub const ERGODICITY_CAVEAT: &str = "Pesin's formula is used as an estimator. For a non-ergodic flow the \
integral of chi aggregates over ergodic components; it still dominates the curvature bound.";
/// `‖V̇‖` below which Jacobi curves are flagged as symmetric.
pub const SYMMETRIC_VDOT_TOL: f64 = 1e-4;

/// Where `R̂` comes from in the bound integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureSource {
    /// The numerical Jacobi-curve pipeline.
    #[default]
    Pipeline,
    /// The analytic formula of the system's family (not available for
    /// custom Hamiltonians).
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropyConfig {
    pub curvature_source: CurvatureSource,
    pub jacobi: JacobiConfig,
    pub lyapunov: LyapunovConfig,
    pub renorm_interval: f64,
    pub unstable: UnstableConfig,
    /// First horizon of the unstable solution (doubled until converged).
    pub unstable_horizon: f64,
    /// Largest tolerated fraction of excluded samples.
    pub exclusion_cap: f64,
    /// Number of samples followed by the trajectory diagnostics.
    pub diagnostic_samples: usize,
    pub diagnostic_horizon: f64,
    pub diagnostic_points: usize,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            curvature_source: CurvatureSource::Pipeline,
            jacobi: JacobiConfig::default(),
            lyapunov: LyapunovConfig::default(),
            renorm_interval: 0.5,
            unstable: UnstableConfig::default(),
            unstable_horizon: 2.0,
            exclusion_cap: 0.05,
            diagnostic_samples: 2,
            diagnostic_horizon: 10.0,
            diagnostic_points: 21,
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        self.jacobi.validate()?;
        self.lyapunov.validate()?;
        self.unstable.validate()?;
        if !(self.renorm_interval > 0.0 && self.unstable_horizon > 0.0 && self.diagnostic_horizon > 0.0) {
            return Err(Error::InvalidInput("entropy horizons and intervals must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.exclusion_cap) {
            return Err(Error::InvalidInput("exclusion_cap must lie in [0, 1]".into()));
        }
        if self.diagnostic_points < 2 {
            return Err(Error::InvalidInput("diagnostic_points must be at least 2".into()));
        }
        Ok(())
    }
}

/// Natural curvature scale `max(1, ‖Hess h‖)` used as the clamping floor.
pub fn curvature_scale(system: &HamiltonianSystem, z: &PhasePoint) -> Result<f64> {
    Ok(linalg::singular_values(&system.hessian(z)?)[0].max(1.0))
}

/// Reduced curvature `R̂_z` from the requested source.
pub fn reduced_operator(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    source: CurvatureSource,
    jacobi: &JacobiConfig,
) -> Result<CurvatureOperator> {
    if system.n() == 1 {
        // Σ_z = ker d_z h / span{ẍh} is trivial for one degree of freedom.
        return Ok(CurvatureOperator::new(DMatrix::zeros(0, 0), CurvatureKind::Reduced));
    }
    match source {
        CurvatureSource::Pipeline => Ok(reduced_curvature(system, z, jacobi)?.operator),
        CurvatureSource::ClosedForm => match system.family() {
            FamilyTag::Mechanical => {
                let (_, rep) = mechanical_closed_form(system, z)?;
                Ok(CurvatureOperator::new(restrict_to_complement(&rep, &z.p), CurvatureKind::Reduced))
            }
            FamilyTag::Geodesic2d => geodesic_closed_form(system.metric().expect("metric family").as_ref(), z),
            FamilyTag::MechanicalOnMetric => mechanical_on_metric_closed_form(
                system.metric().expect("metric family"),
                system.potential().expect("potential family"),
                z,
            ),
            FamilyTag::Custom => Err(Error::InvalidInput("no closed-form curvature for custom Hamiltonians".into())),
        },
    }
}

/// `Tr √(−R̂_z)` after clamping noise-level positive eigenvalues.
pub fn bound_integrand(system: &HamiltonianSystem, z: &PhasePoint, config: &EntropyConfig) -> Result<f64> {
    let op = reduced_operator(system, z, config.curvature_source, &config.jacobi)?;
    bound_integrand_of(&op, curvature_scale(system, z)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    fn of(xs: &[f64]) -> Self {
        let (mean, stderr) = linalg::mean_stderr(xs);
        Self { mean, stderr, count: xs.len() }
    }
}

/// Per-sample outcome. Failed samples keep the error message and are
/// excluded from every estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub bound: Option<f64>,
    pub chi: Option<f64>,
    pub exponents: Option<Vec<f64>>,
    pub pairing_defect: Option<f64>,
    /// Half the pairing defect, plus the drift of `χ` over the second half
    /// of the horizon, plus the step-size error.
    pub numerical_error: Option<f64>,
    /// `|χ(dt) − χ(2dt)| / (2^order − 1)`, the step-size error of `χ`.
    pub discretization_error: Option<f64>,
    pub rprime: Option<f64>,
    /// Why `r′` is missing (it does not exclude the sample).
    pub rprime_error: Option<String>,
    pub error: Option<String>,
    pub hypothesis_violation: bool,
}

impl SampleRecord {
    fn new(index: usize, z: &PhasePoint) -> Self {
        Self {
            index,
            p: z.p.iter().copied().collect(),
            q: z.q.iter().copied().collect(),
            bound: None,
            chi: None,
            exponents: None,
            pairing_defect: None,
            numerical_error: None,
            discretization_error: None,
            rprime: None,
            rprime_error: None,
            error: None,
            hypothesis_violation: false,
        }
    }

    fn fail(&mut self, e: &Error) {
        self.error = Some(e.to_string());
        self.hypothesis_violation = e.is_hypothesis_violation();
    }

    pub fn excluded(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEstimate {
    pub estimate: Estimate,
    pub excluded: usize,
    pub hypothesis_violations: usize,
    pub samples: Vec<SampleRecord>,
}

fn draw(level: &LevelSet, count: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    if count == 0 {
        return Err(Error::InvalidInput("sample_count must be positive".into()));
    }
    let pts = liouville_sample(level, count, seed)?;
    if pts.len() != count {
        return Err(Error::SamplerFailed(format!("{} of {count} samples drawn", pts.len())));
    }
    Ok(pts)
}

fn check_exclusions(samples: &[SampleRecord], cap: f64) -> Result<(usize, usize)> {
    let excluded = samples.iter().filter(|s| s.excluded()).count();
    let hypothesis = samples.iter().filter(|s| s.hypothesis_violation).count();
    if excluded as f64 > cap * samples.len() as f64 {
        return Err(Error::TooManyExclusions { excluded, total: samples.len(), hypothesis, cap });
    }
    Ok((excluded, hypothesis))
}

fn batch(samples: Vec<SampleRecord>, value: impl Fn(&SampleRecord) -> Option<f64>, cap: f64) -> Result<BatchEstimate> {
    let (excluded, hypothesis_violations) = check_exclusions(&samples, cap)?;
    let xs: Vec<f64> = samples.iter().filter(|s| !s.excluded()).filter_map(&value).collect();
    Ok(BatchEstimate { estimate: Estimate::of(&xs), excluded, hypothesis_violations, samples })
}

/// Monte Carlo estimate of `∫ Tr √(−R̂) dμ` over `count` Liouville samples.
/// Samples are evaluated in parallel and summed in a fixed tree order, so
/// the result is bit-for-bit reproducible for a given seed and config.
pub fn entropy_bound(level: &LevelSet, count: usize, seed: u64, config: &EntropyConfig) -> Result<BatchEstimate> {
    config.validate()?;
    let pts = draw(level, count, seed)?;
    let samples: Vec<SampleRecord> = pts
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let mut rec = SampleRecord::new(i, z);
            match bound_integrand(&level.system, z, config) {
                Ok(b) => rec.bound = Some(b),
                Err(e) => rec.fail(&e),
            }
            rec
        })
        .collect();
    batch(samples, |s| s.bound, config.exclusion_cap)
}

fn chi_drift(spec: &LyapunovSpectrum) -> f64 {
    let h = &spec.convergence_history;
    match (h.last(), h.iter().find(|(t, _)| *t >= 0.5 * spec.horizon)) {
        (Some((_, last)), Some((_, mid))) => (chi_of(last) - chi_of(mid)).abs(),
        _ => 0.0,
    }
}

/// Step-size error of `χ` from a second run at twice the step.
fn chi_discretization(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    horizon: f64,
    chi: f64,
    config: &EntropyConfig,
) -> Result<f64> {
    let coarse = LyapunovConfig { dt: 2.0 * config.lyapunov.dt, ..config.lyapunov };
    let order = coarse.integrator(system)?.scheme.order();
    let spec = lyapunov_spectrum(system, z, horizon, config.renorm_interval, &coarse)?;
    Ok((chi - spec.chi).abs() / (2f64.powi(order as i32) - 1.0))
}

fn fill_lyapunov(rec: &mut SampleRecord, system: &HamiltonianSystem, z: &PhasePoint, horizon: f64, config: &EntropyConfig) {
    let spec = match lyapunov_spectrum(system, z, horizon, config.renorm_interval, &config.lyapunov) {
        Ok(s) => s,
        Err(e) => return rec.fail(&e),
    };
    let disc = match chi_discretization(system, z, horizon, spec.chi, config) {
        Ok(d) => d,
        Err(e) => return rec.fail(&e),
    };
    rec.chi = Some(spec.chi);
    rec.pairing_defect = Some(spec.pairing_defect);
    rec.discretization_error = Some(disc);
    rec.numerical_error = Some(0.5 * spec.pairing_defect + chi_drift(&spec) + disc);
    rec.exponents = Some(spec.exponents);
}

/// Monte Carlo estimate of `∫ χ dμ` (Pesin sum) with Lyapunov horizon `horizon`.
pub fn entropy_pesin(
    level: &LevelSet,
    count: usize,
    horizon: f64,
    seed: u64,
    config: &EntropyConfig,
) -> Result<BatchEstimate> {
    config.validate()?;
    let pts = draw(level, count, seed)?;
    let samples: Vec<SampleRecord> = pts
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let mut rec = SampleRecord::new(i, z);
            fill_lyapunov(&mut rec, &level.system, z, horizon, config);
            rec
        })
        .collect();
    batch(samples, |s| s.chi, config.exclusion_cap)
}

/// `r′` at `z` from the unstable solution and the pipeline curvature.
pub fn rprime_at(system: &HamiltonianSystem, z: &PhasePoint, config: &EntropyConfig) -> Result<f64> {
    if system.n() == 1 {
        return Ok(0.0);
    }
    let v = unstable_solution(system, z, config.unstable_horizon, &config.unstable)?;
    let r = reduced_curvature(system, z, &config.unstable.curvature)?;
    r_prime(&v.v, &r.operator.symmetrized)
}

/// Time series along one trajectory of the quantities entering the proof
/// chain: `V`, `r′`, `r`, and the bound integrand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDiagnostics {
    pub times: Vec<f64>,
    pub v_eigenvalues: Vec<Vec<f64>>,
    pub rprime: Vec<f64>,
    pub rfull: Vec<f64>,
    pub bound: Vec<f64>,
    /// Largest finite-difference rate of change of the spectrum of `V`.
    pub vdot_max: f64,
    pub rprime_average: f64,
    pub rfull_average: f64,
    pub bound_average: f64,
}

fn trapezoid_mean(ts: &[f64], xs: &[f64]) -> f64 {
    let span = ts[ts.len() - 1] - ts[0];
    let parts: Vec<f64> = ts.windows(2).zip(xs.windows(2)).map(|(t, x)| 0.5 * (t[1] - t[0]) * (x[0] + x[1])).collect();
    linalg::tree_sum(&parts) / span
}

/// Transports `H(z)` (the graph of `V_z` over the derivative subspace) along
/// the flow and evaluates `V`, `r′`, `r` and `Tr √(−R̂)` at `points` equally
/// spaced times in `[0, horizon]`.
pub fn trajectory_diagnostics(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    horizon: f64,
    points: usize,
    config: &EntropyConfig,
) -> Result<TrajectoryDiagnostics> {
    config.validate()?;
    if points < 2 || !(horizon > 0.0) {
        return Err(Error::InvalidInput("diagnostics need a positive horizon and at least two points".into()));
    }
    if system.n() == 1 {
        let times: Vec<f64> = (0..points).map(|k| horizon * k as f64 / (points - 1) as f64).collect();
        return Ok(TrajectoryDiagnostics {
            times,
            v_eigenvalues: vec![Vec::new(); points],
            rprime: vec![0.0; points],
            rfull: vec![0.0; points],
            bound: vec![0.0; points],
            vdot_max: 0.0,
            rprime_average: 0.0,
            rfull_average: 0.0,
            bound_average: 0.0,
        });
    }
    let uc = &config.unstable;
    let v0 = unstable_solution(system, z, config.unstable_horizon, uc)?;
    let c0 = reduced_curvature(system, z, &uc.curvature)?;
    let mut frame = &c0.frame_derivative()? - &c0.chart.e * &v0.v;
    let integ = uc.integrator(system)?;
    let per = ((horizon / (points - 1) as f64 / uc.dt).round() as usize).max(1);
    let dt = horizon / ((points - 1) * per) as f64;
    let integ = flow::IntegratorConfig { dt, ..integ };
    let mut out = TrajectoryDiagnostics {
        times: Vec::with_capacity(points),
        v_eigenvalues: Vec::with_capacity(points),
        rprime: Vec::new(),
        rfull: Vec::new(),
        bound: Vec::new(),
        vdot_max: 0.0,
        rprime_average: 0.0,
        rfull_average: 0.0,
        bound_average: 0.0,
    };
    let mut cur = z.clone();
    for k in 0..points {
        if k > 0 {
            for s in 0..per {
                let (w, m) = flow::step_with_tangent(system, &cur, dt, &integ)?;
                frame = m * frame;
                cur = w;
                if (s + 1) % uc.reorthonormalize_every == 0 {
                    frame = frame.qr().q();
                }
            }
        }
        let c = if k == 0 { c0.clone() } else { reduced_curvature(system, &cur, &uc.curvature)? };
        let red = c.reduction.as_ref().expect("reduced computation carries its reduction");
        let v = if k == 0 { v0.v.clone() } else { riccati::graph_operator(&c, &red.project_frame(&frame))? };
        let r = &c.operator.symmetrized;
        out.times.push(k as f64 * per as f64 * dt);
        out.v_eigenvalues.push(linalg::sym_eigen(&v).0.iter().copied().collect());
        out.rprime.push(r_prime(&v, r)?);
        out.rfull.push(r_full(&v, r)?);
        out.bound.push(bound_integrand_of(&c.operator, curvature_scale(system, &cur)?)?);
    }
    for (t, e) in out.times.windows(2).zip(out.v_eigenvalues.windows(2)) {
        let d: f64 = e[0].iter().zip(&e[1]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        out.vdot_max = out.vdot_max.max(d / (t[1] - t[0]));
    }
    out.rprime_average = trapezoid_mean(&out.times, &out.rprime);
    out.rfull_average = trapezoid_mean(&out.times, &out.rfull);
    out.bound_average = trapezoid_mean(&out.times, &out.bound);
    Ok(out)
}

/// Both sides of the inequality on a common sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub label: String,
    pub caveat: String,
    pub horizon: f64,
    pub bound_estimate: Estimate,
    pub pesin_estimate: Estimate,
    pub rprime_estimate: Estimate,
    pub sample_count: usize,
    pub excluded: usize,
    pub hypothesis_violations: usize,
    pub rprime_failures: usize,
    pub exclusion_cap: f64,
    /// `pesin − bound`; may be negative from sampling noise.
    pub equality_gap: f64,
    /// Mean per-sample numerical error of `χ`.
    pub numerical_error: f64,
    /// `√(se_bound² + se_pesin² + numerical_error²)`.
    pub gap_sigma: f64,
    /// `equality_gap / gap_sigma` (0 when both vanish).
    pub gap_significance: f64,
    /// Set when every followed trajectory has `‖V̇‖ ≤ 1e-4`; `None` when
    /// no diagnostics were run.
    pub symmetric_jacobi_curves: Option<bool>,
    pub diagnostics: Vec<TrajectoryDiagnostics>,
    pub diagnostic_errors: Vec<String>,
    pub samples: Vec<SampleRecord>,
}

/// Bound, Pesin and `r′` estimates on one set of Liouville samples, with the
/// equality gap and the trajectory diagnostics.
pub fn entropy_report(
    level: &LevelSet,
    count: usize,
    horizon: f64,
    seed: u64,
    config: &EntropyConfig,
) -> Result<EntropyReport> {
    config.validate()?;
    let pts = draw(level, count, seed)?;
    let system = &level.system;
    let samples: Vec<SampleRecord> = pts
        .par_iter()
        .enumerate()
        .map(|(i, z)| {
            let mut rec = SampleRecord::new(i, z);
            match bound_integrand(system, z, config) {
                Ok(b) => rec.bound = Some(b),
                Err(e) => {
                    rec.fail(&e);
                    return rec;
                }
            }
            fill_lyapunov(&mut rec, system, z, horizon, config);
            if !rec.excluded() {
                match rprime_at(system, z, config) {
                    Ok(r) => rec.rprime = Some(r),
                    Err(e) => rec.rprime_error = Some(e.to_string()),
                }
            }
            rec
        })
        .collect();
    let (excluded, hypothesis_violations) = check_exclusions(&samples, config.exclusion_cap)?;
    let kept: Vec<&SampleRecord> = samples.iter().filter(|s| !s.excluded()).collect();
    let pick = |f: fn(&SampleRecord) -> Option<f64>| -> Vec<f64> { kept.iter().filter_map(|s| f(s)).collect() };
    let bound_estimate = Estimate::of(&pick(|s| s.bound));
    let pesin_estimate = Estimate::of(&pick(|s| s.chi));
    let rprimes = pick(|s| s.rprime);
    let rprime_estimate = Estimate::of(&rprimes);
    let errs = pick(|s| s.numerical_error);
    let numerical_error = if errs.is_empty() { 0.0 } else { linalg::tree_sum(&errs) / errs.len() as f64 };
    let equality_gap = pesin_estimate.mean - bound_estimate.mean;
    let gap_sigma = (bound_estimate.stderr.powi(2) + pesin_estimate.stderr.powi(2) + numerical_error.powi(2)).sqrt();
    let gap_significance = if gap_sigma > 0.0 { equality_gap / gap_sigma } else { 0.0 };

    let followed: Vec<&PhasePoint> =
        pts.iter().zip(&samples).filter(|(_, s)| !s.excluded()).map(|(z, _)| z).take(config.diagnostic_samples).collect();
    let runs: Vec<Result<TrajectoryDiagnostics>> = followed
        .par_iter()
        .map(|z| trajectory_diagnostics(system, z, config.diagnostic_horizon, config.diagnostic_points, config))
        .collect();
    let mut diagnostics = Vec::new();
    let mut diagnostic_errors = Vec::new();
    for r in runs {
        match r {
            Ok(d) => diagnostics.push(d),
            Err(e) => diagnostic_errors.push(e.to_string()),
        }
    }
    let symmetric_jacobi_curves = if diagnostics.is_empty() {
        None
    } else {
        Some(diagnostic_errors.is_empty() && diagnostics.iter().all(|d| d.vdot_max <= SYMMETRIC_VDOT_TOL))
    };
    Ok(EntropyReport {
        label: PESIN_LABEL.into(),
        caveat: ERGODICITY_CAVEAT.into(),
        horizon,
        bound_estimate,
        pesin_estimate,
        rprime_estimate,
        sample_count: count,
        excluded,
        hypothesis_violations,
        rprime_failures: kept.len() - rprimes.len(),
        exclusion_cap: config.exclusion_cap,
        equality_gap,
        numerical_error,
        gap_sigma,
        gap_significance,
        symmetric_jacobi_curves,
        diagnostics,
        diagnostic_errors,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{geodesic2d, HyperbolicHalfPlane, RoundSphere};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn hyperbolic_level(energy: f64) -> LevelSet {
        LevelSet::new(geodesic2d(Arc::new(HyperbolicHalfPlane)), energy, vec![Some((-1.0, 1.0)), Some((0.5, 2.0))]).unwrap()
    }

    #[test]
    fn unstable_solution_on_hyperbolic_plane() {
        let sys = geodesic2d(Arc::new(HyperbolicHalfPlane));
        let z = PhasePoint::from_slices(&[0.6, 0.8], &[0.3, 1.0]);
        let s = unstable_solution(&sys, &z, 2.0, &UnstableConfig::default()).unwrap();
        assert_relative_eq!(s.v[(0, 0)], 1.0, epsilon = 1e-6);
        assert!(s.convergence_residual <= 1e-6);
        assert_eq!(s.rank, 1);
    }

    #[test]
    fn closed_form_bound_is_exact_on_constant_curvature() {
        let level = hyperbolic_level(0.5);
        let cfg = EntropyConfig { curvature_source: CurvatureSource::ClosedForm, ..EntropyConfig::default() };
        let b = entropy_bound(&level, 16, 7, &cfg).unwrap();
        assert!((b.estimate.mean - 1.0).abs() < 1e-12);
        assert!(b.estimate.stderr < 1e-12);
    }

    #[test]
    fn sphere_samples_are_hypothesis_violations() {
        let level = LevelSet::new(geodesic2d(Arc::new(RoundSphere)), 0.5, vec![Some((0.3, 2.8)), None]).unwrap();
        let err = entropy_bound(&level, 8, 1, &EntropyConfig::default()).unwrap_err();
        assert!(matches!(err, Error::TooManyExclusions { .. }));
        assert!(err.is_hypothesis_violation());
    }

    #[test]
    fn zero_samples_is_an_error() {
        assert!(entropy_bound(&hyperbolic_level(0.5), 0, 1, &EntropyConfig::default()).is_err());
    }

    #[test]
    fn diagnostics_on_hyperbolic_plane_are_stationary() {
        let sys = geodesic2d(Arc::new(HyperbolicHalfPlane));
        let z = PhasePoint::from_slices(&[0.6, 0.8], &[0.3, 1.0]);
        let d = trajectory_diagnostics(&sys, &z, 4.0, 5, &EntropyConfig::default()).unwrap();
        assert!(d.vdot_max <= SYMMETRIC_VDOT_TOL, "vdot {}", d.vdot_max);
        assert!((d.rprime_average - 1.0).abs() < 1e-5);
        assert!((d.rfull_average - d.rprime_average).abs() < 1e-2);
        assert!(d.rprime_average >= d.bound_average - 1e-6);
    }
}
