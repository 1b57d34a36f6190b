//! Jacobi curves `J_z(t) = φ⁻ᵗ_* Λ_{φᵗz}`, their derivative curves, and the
//! (reduced) curvature operator.
//!
//! `Λ` is the vertical distribution `{δq = 0}`. All curve computations are
//! done in Darboux coordinates `(a, b)` adapted to `Λ_z`: the first block is
//! a `g_z^h`-orthonormal basis `E` of `Λ_z`, the second a Lagrangian
//! complement `F` with `σ(eᵢ, fⱼ) = δᵢⱼ`. Curves are then written as graphs
//! `{(x, S x)}` in a chart rotated by an angle `θ` in every `(aᵢ, bᵢ)` plane.
//! At `θ = 0` the graph is over `Λ_z` itself, which is the coordinate used by
//! [`jacobi_coord`]. The curvature pipeline picks `θ` away from zero because
//! `J°_z(0)` may coincide with the complement `F` (free particles), in
//! which case `S°` is infinite in the unrotated chart. Curvature is invariant
//! under this choice and, since `Λ_z` becomes the graph of `tan θ · I`, its
//! matrix in the rotated chart is its matrix in the basis `E`.

pub mod closed_form;
pub mod laurent;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, IntegratorConfig, Reduction, Scheme};
use crate::linalg;
use crate::symplin::{self, standard_form, SymplecticSpace};
use crate::systems::{HamiltonianSystem, PhasePoint};
pub use closed_form::{
    geodesic_closed_form, mechanical_closed_form, mechanical_on_metric_closed_form, restrict_to_complement,
};
pub use laurent::{derivative_element, laurent_free_term};

/// Numerical parameters of the curvature pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobiConfig {
    /// Initial stencil spacing; `None` picks `0.05 τ` with `τ` the
    /// characteristic time `1/√max(1, ‖Hess h‖)`.
    #[serde(default)]
    pub stencil_h: Option<f64>,
    /// Target for the disagreement between successive extrapolated values,
    /// relative to `max(1, ‖R‖)`.
    #[serde(default = "default_richardson_tol")]
    pub richardson_tol: f64,
    /// Smallest stencil spacing, in units of the characteristic time.
    #[serde(default = "default_floor")]
    pub floor_factor: f64,
    #[serde(default = "default_levels")]
    pub max_levels: usize,
    /// Largest accepted disagreement (relative, as above) when the target is
    /// not met before `max_levels` or the floor; beyond it the pipeline fails.
    #[serde(default = "default_max_truncation")]
    pub max_truncation: f64,
    /// Integrator steps per stencil spacing.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Integrator scheme; `None` picks Störmer–Verlet for separable systems.
    #[serde(default)]
    pub scheme: Option<Scheme>,
    /// Allowed `‖π₀² − π₀‖ / max(1, ‖π₀‖²)` at the accepted spacing.
    #[serde(default = "default_projector_tol")]
    pub projector_tol: f64,
}

fn default_richardson_tol() -> f64 {
    1e-6
}
fn default_floor() -> f64 {
    1e-4
}
fn default_levels() -> usize {
    8
}
fn default_max_truncation() -> f64 {
    1e-4
}
fn default_substeps() -> usize {
    32
}
fn default_projector_tol() -> f64 {
    1e-3
}

impl Default for JacobiConfig {
    fn default() -> Self {
        Self {
            stencil_h: None,
            richardson_tol: default_richardson_tol(),
            floor_factor: default_floor(),
            max_levels: default_levels(),
            max_truncation: default_max_truncation(),
            substeps: default_substeps(),
            scheme: None,
            projector_tol: default_projector_tol(),
        }
    }
}

impl JacobiConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.stencil_h.is_none_or(|h| h > 0.0)
            && self.richardson_tol > 0.0
            && self.floor_factor > 0.0
            && self.max_levels >= 2
            && self.max_truncation >= self.richardson_tol
            && self.substeps >= 1
            && self.projector_tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(
                "jacobi settings must be positive (max_levels >= 2, max_truncation >= richardson_tol)".into(),
            ))
        }
    }

    fn integrator(&self, system: &HamiltonianSystem, dt: f64) -> Result<IntegratorConfig> {
        match self.scheme {
            Some(s) => IntegratorConfig::new(s, dt),
            None => IntegratorConfig::for_system(system, dt),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurvatureKind {
    Full,
    Reduced,
}

/// Accuracy bookkeeping of a pipeline evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineEstimate {
    /// Finest stencil spacing used.
    pub stencil_h: f64,
    /// Disagreement between the last two extrapolated values.
    pub truncation: f64,
    /// `‖π₀² − π₀‖` (relative) at the finest spacing.
    pub projector_defect: f64,
    pub chart_angle: f64,
}

/// A curvature operator with its symmetric part.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureOperator {
    pub matrix: DMatrix<f64>,
    pub symmetrized: DMatrix<f64>,
    pub asym_defect: f64,
    pub kind: CurvatureKind,
    /// Eigenvalues of `symmetrized`, ascending.
    pub eigenvalues: DVector<f64>,
    pub estimate: Option<PipelineEstimate>,
}

impl CurvatureOperator {
    pub fn new(matrix: DMatrix<f64>, kind: CurvatureKind) -> Self {
        let symmetrized = linalg::symmetrize(&matrix);
        let asym_defect = linalg::asym_norm(&matrix);
        let (eigenvalues, _) = linalg::sym_eigen(&symmetrized);
        Self { matrix, symmetrized, asym_defect, kind, eigenvalues, estimate: None }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `asym_defect / ‖matrix‖` (zero for the zero operator).
    pub fn relative_asymmetry(&self) -> f64 {
        let n = self.matrix.norm();
        if n == 0.0 {
            0.0
        } else {
            self.asym_defect / n
        }
    }
}

/// Graph coordinates of a Jacobi curve around one center.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobiCurveData {
    /// Sample offsets from the center.
    pub times: Vec<f64>,
    /// `S` at each offset in `times`.
    pub s: Vec<DMatrix<f64>>,
    pub s_center: DMatrix<f64>,
    pub s_deriv: DMatrix<f64>,
    pub s_circ: DMatrix<f64>,
    pub s_circ_deriv: DMatrix<f64>,
    pub reduced: bool,
}

/// `R = (S° − S)⁻¹ Ṡ° (S° − S)⁻¹ Ṡ`.
pub fn curvature(
    s: &DMatrix<f64>,
    s_dot: &DMatrix<f64>,
    s_circ: &DMatrix<f64>,
    s_circ_dot: &DMatrix<f64>,
) -> Result<CurvatureOperator> {
    let diff = s_circ - s;
    let condition = linalg::inverse_condition(&diff);
    if condition < 1e-12 {
        return Err(Error::SingularSplitting { condition });
    }
    let inv = linalg::inverse(&diff).ok_or(Error::SingularSplitting { condition })?;
    let r = &inv * s_circ_dot * &inv * s_dot;
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("curvature"));
    }
    Ok(CurvatureOperator::new(r, CurvatureKind::Full))
}

/// Fourth-order central difference from samples at `−2h, −h, h, 2h`.
pub(crate) fn five_point(m2: &DMatrix<f64>, m1: &DMatrix<f64>, p1: &DMatrix<f64>, p2: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    (m2 - m1 * 8.0 + p1 * 8.0 - p2) / (12.0 * h)
}

/// A Darboux basis adapted to a Lagrangian (sub)space `Λ`, in full phase
/// coordinates: `E` spans `Λ`, `F` a Lagrangian complement, `σ(E, F) = I`.
#[derive(Debug, Clone)]
pub struct DarbouxChart {
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

impl DarbouxChart {
    pub fn dim(&self) -> usize {
        self.e.ncols()
    }

    /// `(a, b)` with `v = E a + F b`, valid for `v` in the span of `[E | F]`.
    pub fn coords(&self, v: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let space = standard_form(self.e.nrows() / 2);
        (-space.sigma_matrix(&self.f, v), space.sigma_matrix(&self.e, v))
    }

    /// Inverse of [`DarbouxChart::coords`].
    pub fn vectors(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.e * a + &self.f * b
    }
}

/// Rotation of the chart by `θ` in every `(aᵢ, bᵢ)` plane.
fn rotate(a: &DMatrix<f64>, b: &DMatrix<f64>, theta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (s, c) = theta.sin_cos();
    (a * c - b * s, a * s + b * c)
}

fn unrotate(x: &DMatrix<f64>, y: &DMatrix<f64>, theta: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    rotate(x, y, -theta)
}

/// Graph coordinate `S = Y X⁻¹` of the frame `(X; Y)`.
fn graph(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let condition = linalg::inverse_condition(x);
    if condition < 1e-10 {
        return Err(Error::GraphUndefined { condition });
    }
    let xi = linalg::inverse(x).ok_or(Error::GraphUndefined { condition })?;
    Ok((linalg::symmetrize(&(y * xi)), condition))
}

/// Frames of the Jacobi curve in Darboux coordinates `(a; b)`, stacked
/// `2k × k`, at the grid offsets `m·h` for `m ∈ [−4, 4]`.
type FrameSampler<'a> = dyn Fn(f64) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> + 'a;

const GRID: i64 = 4;

/// Curvature and curve data from graph samples `S(m h)`, `m ∈ [−4, 4]`.
fn curvature_from_grid(s_grid: &[DMatrix<f64>], h: f64) -> Result<(CurvatureOperator, JacobiCurveData, f64, f64)> {
    let at = |m: i64| &s_grid[(m + GRID) as usize];
    let mut circ = Vec::new();
    let mut worst_defect = 0.0f64;
    let mut worst_cond = f64::INFINITY;
    for m in -2..=2 {
        let window: Vec<DMatrix<f64>> = (-2..=2).map(|j| at(m + j).clone()).collect();
        let d = derivative_element(&window, h)?;
        worst_defect = worst_defect.max(d.projector_defect);
        worst_cond = worst_cond.min(d.graph_condition);
        circ.push(d.s_circ);
    }
    let s = at(0).clone();
    let s_dot = five_point(at(-2), at(-1), at(1), at(2), h);
    let s_circ = circ[2].clone();
    let s_circ_dot = five_point(&circ[0], &circ[1], &circ[3], &circ[4], h);
    let op = curvature(&s, &s_dot, &s_circ, &s_circ_dot)?;
    let data = JacobiCurveData {
        times: (-GRID..=GRID).map(|m| m as f64 * h).collect(),
        s: s_grid.to_vec(),
        s_center: s,
        s_deriv: s_dot,
        s_circ,
        s_circ_deriv: s_circ_dot,
        reduced: false,
    };
    Ok((op, data, worst_defect, worst_cond))
}

const CHART_ANGLES: [f64; 6] = [
    std::f64::consts::FRAC_PI_4,
    std::f64::consts::FRAC_PI_8,
    3.0 * std::f64::consts::FRAC_PI_8,
    std::f64::consts::FRAC_PI_4 + 0.3,
    std::f64::consts::FRAC_PI_4 - 0.3,
    0.0,
];

fn graphs_in_chart(frames: &[(DMatrix<f64>, DMatrix<f64>)], theta: f64) -> Result<(Vec<DMatrix<f64>>, f64)> {
    let mut worst = f64::INFINITY;
    let mut out = Vec::with_capacity(frames.len());
    for (a, b) in frames {
        let (x, y) = rotate(a, b, theta);
        let (s, c) = graph(&x, &y)?;
        worst = worst.min(c);
        out.push(s);
    }
    Ok((out, worst))
}

/// Picks the chart angle with the best-conditioned graphs of both `J` and `J°`.
fn choose_chart(frames: &[(DMatrix<f64>, DMatrix<f64>)], h: f64) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    let mut last_err = None;
    for &theta in &CHART_ANGLES {
        let scored = graphs_in_chart(frames, theta)
            .and_then(|(s, c)| curvature_from_grid(&s, h).map(|(_, _, _, c2)| c.min(c2)));
        match scored {
            Ok(score) => {
                if best.is_none_or(|(_, b)| score > b) {
                    best = Some((theta, score));
                }
                if score >= 0.2 {
                    break;
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((theta, _)), _) => Ok(theta),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("chart angle list is non-empty"),
    }
}

/// Runs the pipeline on successively halved spacings and Richardson-
/// extrapolates. Both the five-point stencils and the symmetric Laurent fit
/// leave an `O(h⁴)` leading error.
fn richardson(
    sampler: &FrameSampler<'_>,
    h0: f64,
    h_floor: f64,
    config: &JacobiConfig,
    kind: CurvatureKind,
    fixed_angle: Option<f64>,
) -> Result<(CurvatureOperator, JacobiCurveData, f64)> {
    let first = sampler(h0)?;
    let theta = match fixed_angle {
        Some(t) => t,
        None => choose_chart(&first, h0)?,
    };
    let mut h = h0;
    let mut frames = first;
    let mut raw: Vec<DMatrix<f64>> = Vec::new();
    let mut extrap: Option<DMatrix<f64>> = None;
    let mut truncation = f64::INFINITY;
    let mut best: Option<(DMatrix<f64>, JacobiCurveData, f64)> = None;
    for level in 0..config.max_levels {
        if level > 0 {
            frames = sampler(h)?;
        }
        let (s_grid, _) = graphs_in_chart(&frames, theta)?;
        let (op, data, defect, _) = curvature_from_grid(&s_grid, h)?;
        if let Some(prev) = raw.last() {
            let e = (&op.matrix * 16.0 - prev) / 15.0;
            if let Some(pe) = &extrap {
                truncation = (&e - pe).norm();
            } else {
                truncation = (&op.matrix - prev).norm() / 15.0;
            }
            extrap = Some(e.clone());
            best = Some((e, data, defect));
            let scale = best.as_ref().map_or(1.0, |b| b.0.norm().max(1.0));
            if level >= 2 && truncation < config.richardson_tol * scale {
                break;
            }
        } else {
            best = Some((op.matrix.clone(), data, defect));
        }
        raw.push(op.matrix);
        if h / 2.0 < h_floor {
            break;
        }
        h /= 2.0;
    }
    let (matrix, mut data, defect) = best.expect("at least one level evaluated");
    let scale = matrix.norm().max(1.0);
    if !(truncation <= config.max_truncation * scale) {
        return Err(Error::NoConvergence(format!(
            "curvature extrapolation disagreement {:e} at stencil spacing {h:e}",
            truncation / scale
        )));
    }
    if defect > config.projector_tol {
        return Err(Error::LaurentFit(format!(
            "free Laurent coefficient is not a projector (defect {defect:e})"
        )));
    }
    data.reduced = kind == CurvatureKind::Reduced;
    let mut op = CurvatureOperator::new(matrix, kind);
    op.estimate = Some(PipelineEstimate { stencil_h: h, truncation, projector_defect: defect, chart_angle: theta });
    Ok((op, data, theta))
}

fn characteristic_time(system: &HamiltonianSystem, z: &PhasePoint) -> Result<f64> {
    let hess = system.hessian(z)?;
    Ok(1.0 / linalg::singular_values(&hess)[0].max(1.0).sqrt())
}

fn vertical_frame(n: usize) -> DMatrix<f64> {
    let mut v = DMatrix::zeros(2 * n, n);
    v.view_mut((0, 0), (n, n)).fill_with_identity();
    v
}

/// Rescales `frame` to be orthonormal for `g_z^h`, enforcing monotonicity.
fn gh_orthonormal(system: &HamiltonianSystem, z: &PhasePoint, frame: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let g = symplin::gram_gh(system, z, frame)?;
    let (p, m, zero) = g.signature;
    if zero > 0 {
        return Err(Error::NotRegular(zero));
    }
    if p > 0 && m > 0 {
        return Err(Error::NotMonotone(p, m, zero));
    }
    let sign = if m > 0 { -1.0 } else { 1.0 };
    Ok((frame * linalg::sym_inv_sqrt_abs(&g.matrix), sign))
}

/// Pulls the vertical frame at `φᵗz` back to `z` with the discrete tangent
/// map: columns span `J_z(t)`.
fn pulled_back(m: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    m.clone().lu().solve(&vertical_frame(n)).ok_or(Error::NonFinite("tangent map inverse"))
}

/// Darboux chart adapted to the vertical space `Λ_z`, `E` orthonormal for `g_z^h`.
pub fn vertical_chart(system: &HamiltonianSystem, z: &PhasePoint) -> Result<DarbouxChart> {
    let n = system.n();
    let (e, _) = gh_orthonormal(system, z, &vertical_frame(n))?;
    let full = symplin::darboux_complete(&standard_form(n), &e)?;
    Ok(DarbouxChart { e, f: full.columns(n, n).into_owned() })
}

/// Graph coordinate `S_t` of `J_z(t)` over `Λ_z` (θ = 0 chart), with `Λ`
/// the constant distribution spanned by `lambda_frame` in the chart.
pub fn jacobi_coord(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    lambda_frame: &DMatrix<f64>,
    t: f64,
    config: &JacobiConfig,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    let n = system.n();
    let space = standard_form(n);
    if !symplin::is_lagrangian(&space, lambda_frame, 1e-10)? {
        return Err(Error::NotLagrangian { defect: space.isotropy_defect(lambda_frame)? });
    }
    let full = symplin::darboux_complete(&space, lambda_frame)?;
    let chart = DarbouxChart { e: lambda_frame.clone(), f: full.columns(n, n).into_owned() };
    if t == 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    let tau = characteristic_time(system, z)?;
    let steps = ((t.abs() / (0.05 * tau / config.substeps as f64)).ceil() as i64).max(1);
    let dt = t.abs() / steps as f64;
    let integ = config.integrator(system, dt)?;
    let maps = flow::tangent_maps(system, z, dt, &[steps * t.signum() as i64], &integ)?;
    let frame = maps[0].1.clone().lu().solve(lambda_frame).ok_or(Error::NonFinite("tangent map inverse"))?;
    let (a, b) = chart.coords(&frame);
    Ok(graph(&a, &b)?.0)
}

/// Output of a curvature evaluation with the data needed downstream.
#[derive(Debug, Clone)]
pub struct CurvatureComputation {
    pub operator: CurvatureOperator,
    pub curve: JacobiCurveData,
    /// Darboux chart at `z` in which `curve` is expressed (before rotation).
    pub chart: DarbouxChart,
    pub chart_angle: f64,
    /// Reduction data at `z` (reduced computations only).
    pub reduction: Option<Reduction>,
}

impl CurvatureComputation {
    /// `ė(0)` of the canonical moving frame whose `e(0)` is the chart basis
    /// `E`, as full phase vectors: in the rotated chart `ė = (W X₀, S° W X₀)`
    /// with `W = (S° − S)⁻¹ Ṡ` and `X₀ = cos θ · I`.
    pub fn frame_derivative(&self) -> Result<DMatrix<f64>> {
        let c = &self.curve;
        let k = self.chart.dim();
        let diff = &c.s_circ - &c.s_center;
        let w = linalg::inverse(&diff)
            .ok_or(Error::SingularSplitting { condition: linalg::inverse_condition(&diff) })?
            * &c.s_deriv;
        let x0 = DMatrix::identity(k, k) * self.chart_angle.cos();
        let x = &w * &x0;
        let y = &c.s_circ * &x;
        let (a, b) = unrotate(&x, &y, self.chart_angle);
        Ok(self.chart.vectors(&a, &b))
    }
}

/// Full curvature `R_z` of the vertical Jacobi curve at `t = 0`.
pub fn full_curvature(system: &HamiltonianSystem, z: &PhasePoint, config: &JacobiConfig) -> Result<CurvatureComputation> {
    pipeline(system, z, 0.0, CurvatureKind::Full, config, None)
}

/// Curvature of the (full or reduced) Jacobi curve of `z` at time `t`. For
/// `t ≠ 0` the matrix is taken in a basis of `J_z(t)` orthonormal for `|Ṡ|`,
/// so it is orthogonally similar to the curvature at `φᵗz` in its own frame.
pub fn curvature_along(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    t: f64,
    kind: CurvatureKind,
    config: &JacobiConfig,
) -> Result<CurvatureComputation> {
    pipeline(system, z, t, kind, config, None)
}

/// Canonical moving frame `e(t)` (full phase vectors, one matrix per entry of
/// `times`) starting from the chart basis `E` at `t = 0`. In the rotated
/// chart `e = (X, S X)` with `Ẋ = (S° − S)⁻¹ Ṡ X`, integrated by RK4.
pub fn canonical_frame(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    times: &[f64],
    kind: CurvatureKind,
    config: &JacobiConfig,
) -> Result<Vec<DMatrix<f64>>> {
    let origin = pipeline(system, z, 0.0, kind, config, None)?;
    let theta = origin.chart_angle;
    let tau = characteristic_time(system, z)?;
    let k = origin.chart.dim();
    let generator = |t: f64| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let c = if t == 0.0 { origin.clone() } else { pipeline(system, z, t, kind, config, Some(theta))? };
        let diff = &c.curve.s_circ - &c.curve.s_center;
        let w = linalg::inverse(&diff)
            .ok_or(Error::SingularSplitting { condition: linalg::inverse_condition(&diff) })?
            * &c.curve.s_deriv;
        Ok((w, c.curve.s_center))
    };
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let x0 = DMatrix::identity(k, k) * theta.cos();
        let steps = ((t.abs() / (0.02 * tau)).ceil() as usize).max(1);
        let dt = t / steps as f64;
        let mut x = x0;
        let mut s_end = origin.curve.s_center.clone();
        for i in 0..steps {
            let t0 = i as f64 * dt;
            let (w0, _) = generator(t0)?;
            let (wm, _) = generator(t0 + 0.5 * dt)?;
            let (w1, s1) = generator(t0 + dt)?;
            let k1 = &w0 * &x;
            let k2 = &wm * (&x + &k1 * (0.5 * dt));
            let k3 = &wm * (&x + &k2 * (0.5 * dt));
            let k4 = &w1 * (&x + &k3 * dt);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            s_end = s1;
        }
        let y = &s_end * &x;
        let (a, b) = unrotate(&x, &y, theta);
        out.push(origin.chart.vectors(&a, &b));
    }
    Ok(out)
}

/// Tangent map of the discrete flow from `z` to time `t`, with a step no
/// larger than `dt_max`.
fn tangent_map_to(system: &HamiltonianSystem, z: &PhasePoint, t: f64, dt_max: f64, config: &JacobiConfig) -> Result<(PhasePoint, DMatrix<f64>)> {
    let steps = ((t.abs() / dt_max).ceil() as i64).max(1);
    let dt = t.abs() / steps as f64;
    let integ = config.integrator(system, dt)?;
    let mut maps = flow::tangent_maps(system, z, dt, &[steps * t.signum() as i64], &integ)?;
    Ok(maps.swap_remove(0))
}

fn pipeline(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    center: f64,
    kind: CurvatureKind,
    config: &JacobiConfig,
    fixed_angle: Option<f64>,
) -> Result<CurvatureComputation> {
    config.validate()?;
    let n = system.n();
    let (reduction, chart) = match kind {
        CurvatureKind::Full => (None, vertical_chart(system, z)?),
        CurvatureKind::Reduced => {
            if n < 2 {
                return Err(Error::InvalidInput("reduced curvature needs n >= 2".into()));
            }
            let (red, chart) = reduced_chart(system, z)?;
            (Some(red), chart)
        }
    };
    let tau = characteristic_time(system, z)?;
    let h0 = config.stencil_h.unwrap_or(0.05 * tau);
    // The map to the center is shared by every level so that its
    // discretization error does not alias into the extrapolation.
    let (zc, to_center) = if center == 0.0 {
        (z.clone(), DMatrix::identity(2 * n, 2 * n))
    } else {
        tangent_map_to(system, z, center, h0 / (4.0 * config.substeps as f64), config)?
    };
    let sampler = |h: f64| -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
        let sub = config.substeps as i64;
        let dt = h / config.substeps as f64;
        let integ = config.integrator(system, dt)?;
        let idx: Vec<i64> = (-GRID..=GRID).map(|m| m * sub).collect();
        let maps = flow::tangent_maps(system, &zc, dt, &idx, &integ)?;
        maps.iter()
            .map(|(_, m)| {
                let fr = pulled_back(&(m * &to_center), n)?;
                match &reduction {
                    None => Ok(chart.coords(&fr)),
                    Some(red) => {
                        let inter = kernel_part(&red.gradient, &fr, n)?;
                        Ok(chart.coords(&red.project_frame(&inter)))
                    }
                }
            })
            .collect()
    };
    let (mut operator, curve, theta) = richardson(&sampler, h0, config.floor_factor * tau, config, kind, fixed_angle)?;
    if center != 0.0 {
        // Away from t = 0 the chart basis is not adapted to J(t); use a basis
        // orthonormal for the form Ṡ, which the canonical frame also is.
        let z_basis = linalg::sym_inv_sqrt_abs(&curve.s_deriv);
        let z_inv = linalg::inverse(&z_basis).ok_or(Error::NonFinite("Ṡ basis"))?;
        let estimate = operator.estimate.take();
        operator = CurvatureOperator::new(&z_inv * &operator.matrix * &z_basis, kind);
        operator.estimate = estimate;
    }
    Ok(CurvatureComputation { operator, curve, chart, chart_angle: theta, reduction })
}

/// Darboux chart of the reduced space at `z`: `E` is the projection of
/// `Λ_z ∩ ker d_z h` (orthonormal for `g_z^h`), and `[E | F]` spans the
/// representative `W` of `Σ_z`.
pub fn reduced_chart(system: &HamiltonianSystem, z: &PhasePoint) -> Result<(Reduction, DarbouxChart)> {
    let n = system.n();
    let red = Reduction::at(system, z)?;
    let v = vertical_frame(n);
    let lam_ker = kernel_part(&red.gradient, &v, n)?;
    let (e_raw, _) = gh_orthonormal(system, z, &lam_ker)?;
    let e = red.project_frame(&e_raw);
    let basis = red.basis()?;
    let space = standard_form(n);
    let omega = space.sigma_matrix(&basis, &basis);
    let sub = SymplecticSpace::with_form(-omega)?;
    // Coordinates of E in the W basis (exact: E lies in W).
    let e_w = least_squares(&basis, &e)?;
    let d = symplin::darboux_complete(&sub, &e_w)?;
    let k = n - 1;
    let f = &basis * d.columns(k, k);
    Ok((red, DarbouxChart { e, f }))
}

/// Frame of `span(frame) ∩ ker⟨∇h, ·⟩`; its dimension must be `n − 1`.
fn kernel_part(grad: &DVector<f64>, frame: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let row = DMatrix::from_row_slice(1, frame.ncols(), (grad.transpose() * frame).as_slice());
    let scale = grad.norm() * frame.norm();
    let rank = if row.norm() > 1e-8 * scale { 1 } else { 0 };
    if rank == 0 {
        return Err(Error::DegenerateIntersection { rank: n, expected: n - 1 });
    }
    let null = linalg::null_space(&row, 1e-8);
    if null.ncols() != n - 1 {
        return Err(Error::DegenerateIntersection { rank: null.ncols(), expected: n - 1 });
    }
    Ok(frame * null)
}

fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ata = a.transpose() * a;
    let inv = linalg::inverse(&ata).ok_or(Error::RankDeficient { rank: linalg::rank(a, 1e-12), expected: a.ncols() })?;
    Ok(inv * a.transpose() * b)
}

/// Reduced curvature `R̂_z^h` on the `(n−1)`-dimensional reduced curve, in
/// the `g_z^h`-orthonormal basis of `ψ(Λ_z ∩ ker d_z h)`.
pub fn reduced_curvature(system: &HamiltonianSystem, z: &PhasePoint, config: &JacobiConfig) -> Result<CurvatureComputation> {
    pipeline(system, z, 0.0, CurvatureKind::Reduced, config, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{mechanical, PolynomialPotential, Topology, ZeroPotential};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn harmonic(n: usize) -> HamiltonianSystem {
        mechanical(Arc::new(PolynomialPotential::isotropic_harmonic(n)), vec![Topology::Unbounded; n]).unwrap()
    }

    #[test]
    fn curvature_formula_basics() {
        let i = DMatrix::<f64>::identity(2, 2);
        let z = DMatrix::<f64>::zeros(2, 2);
        let r = curvature(&z, &(-&i), &(&i * 2.0), &z).unwrap();
        assert_eq!(r.matrix, z);
        assert!(matches!(curvature(&i, &i, &i, &i), Err(Error::SingularSplitting { .. })));
    }

    #[test]
    fn jacobi_coordinates_in_one_dimension() {
        let v = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let cfg = JacobiConfig::default();
        let z = PhasePoint::from_slices(&[1.0], &[0.0]);
        let free = mechanical(Arc::new(ZeroPotential { n: 1 }), vec![Topology::Unbounded]).unwrap();
        assert_eq!(jacobi_coord(&free, &z, &v, 0.0, &cfg).unwrap()[(0, 0)], 0.0);
        assert_relative_eq!(jacobi_coord(&free, &z, &v, 0.7, &cfg).unwrap()[(0, 0)], -0.7, epsilon = 1e-12);
        let osc = harmonic(1);
        let s = jacobi_coord(&osc, &z, &v, 0.6, &cfg).unwrap()[(0, 0)];
        assert_relative_eq!(s, -(0.6f64).tan(), epsilon = 1e-5);
    }

    #[test]
    fn harmonic_full_curvature_is_identity() {
        let z = PhasePoint::from_slices(&[0.3, -0.2], &[1.0, 0.5]);
        let c = full_curvature(&harmonic(2), &z, &JacobiConfig::default()).unwrap();
        assert_relative_eq!(c.operator.symmetrized, DMatrix::identity(2, 2), epsilon = 1e-6);
        let z1 = PhasePoint::from_slices(&[0.3], &[1.0]);
        let c1 = full_curvature(&harmonic(1), &z1, &JacobiConfig::default()).unwrap();
        assert_relative_eq!(c1.operator.matrix[(0, 0)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn free_particle_is_flat() {
        let free = mechanical(Arc::new(ZeroPotential { n: 2 }), vec![Topology::Unbounded; 2]).unwrap();
        let z = PhasePoint::from_slices(&[1.0, 0.5], &[0.0, 0.0]);
        let c = full_curvature(&free, &z, &JacobiConfig::default()).unwrap();
        assert!(c.operator.matrix.norm() < 1e-8);
        let r = reduced_curvature(&free, &z, &JacobiConfig::default()).unwrap();
        assert!(r.operator.matrix.norm() < 1e-8);
    }

    #[test]
    fn reduced_harmonic_matches_example() {
        let z = PhasePoint::from_slices(&[1.0, 0.0], &[1.0, 1.0]);
        let r = reduced_curvature(&harmonic(2), &z, &JacobiConfig::default()).unwrap();
        assert_eq!(r.operator.dim(), 1);
        assert_relative_eq!(r.operator.matrix[(0, 0)], 4.0, epsilon = 1e-5);
    }

    #[test]
    fn reduced_geodesic_curvature_matches_gauss_curvature() {
        use crate::systems::{geodesic2d, HyperbolicHalfPlane, Metric2D, RoundSphere};
        let cfg = JacobiConfig::default();
        let hyp: Arc<dyn Metric2D> = Arc::new(HyperbolicHalfPlane);
        let sys = geodesic2d(hyp.clone());
        for z in [PhasePoint::from_slices(&[0.6, 0.8], &[0.3, 1.0]), PhasePoint::from_slices(&[0.2, -0.3], &[0.1, 1.7])] {
            let r = reduced_curvature(&sys, &z, &cfg).unwrap();
            let c = closed_form::geodesic_closed_form(hyp.as_ref(), &z).unwrap();
            assert_relative_eq!(r.operator.matrix[(0, 0)], c.matrix[(0, 0)], epsilon = 1e-6);
        }
        let sphere = geodesic2d(Arc::new(RoundSphere));
        let z = PhasePoint::from_slices(&[0.6, 0.8 * 1.2f64.sin()], &[1.2, 0.0]);
        let r = reduced_curvature(&sphere, &z, &cfg).unwrap();
        assert_relative_eq!(r.operator.matrix[(0, 0)], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn potential_on_metric_matches_closed_form() {
        use crate::systems::{mechanical_on_metric, CosinePotential, CosineTerm, HyperbolicHalfPlane, Metric2D, ScalarField};
        let hyp: Arc<dyn Metric2D> = Arc::new(HyperbolicHalfPlane);
        let u: Arc<dyn ScalarField> = Arc::new(CosinePotential {
            n: 2,
            terms: vec![
                CosineTerm { amplitude: 0.7, wavevector: vec![1.0, 2.0], phase: 0.3 },
                CosineTerm { amplitude: -0.4, wavevector: vec![0.0, 1.0], phase: 0.0 },
            ],
        });
        let sys = mechanical_on_metric(hyp.clone(), u.clone()).unwrap();
        let z = PhasePoint::from_slices(&[0.8, -0.5], &[0.4, 1.1]);
        let r = reduced_curvature(&sys, &z, &JacobiConfig::default()).unwrap();
        let c = closed_form::mechanical_on_metric_closed_form(&hyp, &u, &z).unwrap();
        assert_relative_eq!(r.operator.matrix[(0, 0)], c.matrix[(0, 0)], max_relative = 1e-6);
        let full = full_curvature(&sys, &z, &JacobiConfig::default()).unwrap();
        assert!(full.operator.relative_asymmetry() < 1e-6);
    }

    #[test]
    fn split_signature_is_rejected() {
        use crate::systems::{custom, CustomHamiltonian};
        let sign = DVector::from_vec(vec![1.0, 1.0, -1.0]);
        let (s1, s2, s3) = (sign.clone(), sign.clone(), sign);
        let cb = CustomHamiltonian {
            h: Arc::new(move |z: &PhasePoint| {
                0.5 * z.p.component_mul(&s1).dot(&z.p) + 0.5 * z.q.norm_squared()
            }),
            grad: Arc::new(move |z: &PhasePoint| {
                let mut g = DVector::zeros(6);
                g.rows_mut(0, 3).copy_from(&z.p.component_mul(&s2));
                g.rows_mut(3, 3).copy_from(&z.q);
                g
            }),
            hess: Arc::new(move |_: &PhasePoint| {
                let mut h = DMatrix::identity(6, 6);
                h.view_mut((0, 0), (3, 3)).set_diagonal(&s3);
                h
            }),
        };
        let sys = custom(3, cb, vec![Topology::Unbounded; 3]).unwrap();
        let z = PhasePoint::from_slices(&[1.0, 0.0, 0.0], &[0.2, 0.1, -0.3]);
        let err = reduced_curvature(&sys, &z, &JacobiConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotMonotone(1, 1, 0)), "{err:?}");
        assert!(err.is_hypothesis_violation());
    }
}
