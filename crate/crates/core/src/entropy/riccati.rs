//! The matrix Riccati equation `V̇ + V² + R(t) = 0`, the equivalent linear
//! system `ξ̇ = −η`, `η̇ = Rξ` (with `V = −ηξ⁻¹`), and the unstable solution
//! `V_z` obtained as the limit of solutions started from `V(−T) = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, IntegratorConfig, Scheme};
use crate::jacobi::{reduced_curvature, CurvatureComputation, JacobiConfig};
use crate::linalg;
use crate::systems::{HamiltonianSystem, PhasePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiccatiConfig {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    /// `‖V‖` above which the solution is declared to have blown up.
    pub blowup_threshold: f64,
    pub max_steps: usize,
    /// Lag `τ` of the convergence residual `‖V(t) − V(t − τ)‖`.
    pub residual_lag: f64,
}

impl Default for RiccatiConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: 1e-3,
            max_step: 0.1,
            blowup_threshold: 1e8,
            max_steps: 10_000_000,
            residual_lag: 1.0,
        }
    }
}

impl RiccatiConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.rtol, self.atol, self.initial_step, self.max_step, self.blowup_threshold, self.residual_lag];
        if pos.iter().any(|x| !(*x > 0.0 && x.is_finite())) || self.max_steps == 0 {
            return Err(Error::InvalidInput("Riccati tolerances and step bounds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiState {
    pub v: DMatrix<f64>,
    /// Final time (the blowup time when `blowup_flag` is set).
    pub t: f64,
    pub blowup_flag: bool,
    pub convergence_residual: f64,
    /// Numerical rank of `V`: eigenvalues above `1e-8 · ‖V‖` and above an absolute `1e-9`.
    pub rank: usize,
}

/// Accepted steps of an integration, `(t, V(t))`.
pub type RiccatiPath = Vec<(f64, DMatrix<f64>)>;

const RANK_ABS_TOL: f64 = 1e-9;

fn v_rank(v: &DMatrix<f64>) -> usize {
    let (vals, _) = linalg::sym_eigen(v);
    let vmax = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cut = (super::trace::KERNEL_REL_TOL * vmax).max(RANK_ABS_TOL);
    vals.iter().filter(|&&x| x.abs() > cut).count()
}

enum Control {
    Continue,
    Stop,
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Adaptive Dormand–Prince integration from `t0` to `t1 ≥ t0`. `accept` sees
/// (and may modify) each accepted state and can stop the integration.
/// Returns the final time and state.
fn dopri5(
    f: &mut dyn FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    y0: DVector<f64>,
    t0: f64,
    t1: f64,
    cfg: &RiccatiConfig,
    accept: &mut dyn FnMut(f64, &mut DVector<f64>) -> Control,
) -> Result<(f64, DVector<f64>)> {
    if !(t1 >= t0) {
        return Err(Error::InvalidInput(format!("time span [{t0}, {t1}] is reversed")));
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = cfg.initial_step.min(cfg.max_step).min((t1 - t0).max(f64::MIN_POSITIVE));
    let mut k1 = f(t, &y)?;
    let mut steps = 0;
    while t < t1 {
        if steps >= cfg.max_steps {
            return Err(Error::NoConvergence(format!("Riccati integration exceeded {} steps", cfg.max_steps)));
        }
        steps += 1;
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let mut k = vec![k1.clone()];
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys.axpy(h * A[s][j], kj, 1.0);
                }
            }
            k.push(f(t + C[s] * h, &ys)?);
        }
        let mut y5 = y.clone();
        let mut err = DVector::zeros(y.len());
        for s in 0..7 {
            let b5 = if s < 6 { A[6][s] } else { 0.0 };
            y5.axpy(h * b5, &k[s], 1.0);
            err.axpy(h * (b5 - B4[s]), &k[s], 1.0);
        }
        let mut ratio = 0.0f64;
        for i in 0..y.len() {
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(y5[i].abs());
            ratio = ratio.max((err[i] / sc).abs());
        }
        if !ratio.is_finite() || y5.iter().any(|v| !v.is_finite()) {
            ratio = f64::INFINITY;
        }
        if ratio <= 1.0 {
            t = if last { t1 } else { t + h };
            y = y5;
            if let Control::Stop = accept(t, &mut y) {
                return Ok((t, y));
            }
            k1 = f(t, &y)?;
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(cfg.max_step);
        if h < 1e-14 * t.abs().max(1.0) {
            // Step size collapse: the solution is leaving every bounded set.
            return Ok((t, y));
        }
    }
    Ok((t, y))
}

fn to_vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn to_mat(v: &DVector<f64>, k: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(k, k, v.as_slice())
}

fn check_square(name: &'static str, m: &DMatrix<f64>, k: usize) -> Result<()> {
    if m.nrows() != k || m.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, got: m.nrows() });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(name));
    }
    Ok(())
}

/// Integrates `V̇ = −V² − R(t)` over `t_span` and returns the final state
/// together with the accepted steps. Blowup is reported in the state, not as
/// an error.
pub fn riccati_path(
    r_of_t: &mut dyn FnMut(f64) -> Result<DMatrix<f64>>,
    v0: &DMatrix<f64>,
    t_span: (f64, f64),
    config: &RiccatiConfig,
) -> Result<(RiccatiState, RiccatiPath)> {
    config.validate()?;
    let k = v0.nrows();
    check_square("V0", v0, k)?;
    let mut rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let v = to_mat(y, k);
        let r = r_of_t(t)?;
        check_square("R(t)", &r, k)?;
        Ok(to_vec(&(-(&v * &v) - linalg::symmetrize(&r))))
    };
    let y0 = to_vec(&linalg::symmetrize(v0));
    let mut path: RiccatiPath = vec![(t_span.0, linalg::symmetrize(v0))];
    let mut blowup = false;
    let threshold = config.blowup_threshold;
    let mut accept = |t: f64, y: &mut DVector<f64>| {
        let v = linalg::symmetrize(&to_mat(y, k));
        *y = to_vec(&v);
        let big = v.norm() > threshold;
        path.push((t, v));
        if big {
            blowup = true;
            Control::Stop
        } else {
            Control::Continue
        }
    };
    let (t_end, y) = dopri5(&mut rhs, y0, t_span.0, t_span.1, config, &mut accept)?;
    let v = to_mat(&y, k);
    // A step-size collapse short of t1 is a blowup as well.
    let blowup_flag = blowup || t_end < t_span.1;
    let target = t_end - config.residual_lag;
    let lagged = path.iter().min_by(|a, b| (a.0 - target).abs().total_cmp(&(b.0 - target).abs())).map(|p| p.1.clone());
    let convergence_residual = lagged.map_or(f64::NAN, |l| (&v - l).norm());
    let rank = v_rank(&v);
    Ok((RiccatiState { v, t: t_end, blowup_flag, convergence_residual, rank }, path))
}

/// Integrates `V̇ = −V² − R(t)` from `V(t_span.0) = V0` with an adaptive
/// embedded Runge–Kutta pair, symmetrizing after every accepted step.
pub fn riccati_integrate(
    r_of_t: &mut dyn FnMut(f64) -> Result<DMatrix<f64>>,
    v0: &DMatrix<f64>,
    t_span: (f64, f64),
    config: &RiccatiConfig,
) -> Result<RiccatiState> {
    Ok(riccati_path(r_of_t, v0, t_span, config)?.0)
}

/// Solution `(ξ, η)` of `ξ̇ = −η`, `η̇ = R(t) ξ` at `t_span.1`.
pub fn linear_system_flow(
    r_of_t: &mut dyn FnMut(f64) -> Result<DMatrix<f64>>,
    xi0: &DMatrix<f64>,
    eta0: &DMatrix<f64>,
    t_span: (f64, f64),
    config: &RiccatiConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    config.validate()?;
    let k = xi0.nrows();
    check_square("xi0", xi0, k)?;
    check_square("eta0", eta0, k)?;
    let mut rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let xi = DMatrix::from_column_slice(k, k, &y.as_slice()[..k * k]);
        let eta = DMatrix::from_column_slice(k, k, &y.as_slice()[k * k..]);
        let r = linalg::symmetrize(&r_of_t(t)?);
        let mut out = DVector::zeros(2 * k * k);
        out.as_mut_slice()[..k * k].copy_from_slice((-eta).as_slice());
        out.as_mut_slice()[k * k..].copy_from_slice((r * xi).as_slice());
        Ok(out)
    };
    let mut y0 = DVector::zeros(2 * k * k);
    y0.as_mut_slice()[..k * k].copy_from_slice(xi0.as_slice());
    y0.as_mut_slice()[k * k..].copy_from_slice(eta0.as_slice());
    let (_, y) = dopri5(&mut rhs, y0, t_span.0, t_span.1, config, &mut |_, _| Control::Continue)?;
    Ok((
        DMatrix::from_column_slice(k, k, &y.as_slice()[..k * k]),
        DMatrix::from_column_slice(k, k, &y.as_slice()[k * k..]),
    ))
}

/// Unstable solution of the Riccati equation for a curvature callback
/// `R(t)`, `t ≤ 0`: integrates from `V(−T) = 0` to `t = 0`, doubling `T`
/// from `horizon` until `‖V_T − V_{2T}‖ ≤ tol`.
pub fn unstable_riccati(
    r_of_t: &mut dyn FnMut(f64) -> Result<DMatrix<f64>>,
    dim: usize,
    horizon: f64,
    max_horizon: f64,
    tol: f64,
    config: &RiccatiConfig,
) -> Result<RiccatiState> {
    if !(horizon > 0.0 && max_horizon >= horizon && tol > 0.0) {
        return Err(Error::InvalidInput("unstable solution needs 0 < horizon <= max_horizon and tol > 0".into()));
    }
    let zero = DMatrix::zeros(dim, dim);
    let mut t = horizon;
    let mut prev = riccati_integrate(r_of_t, &zero, (-t, 0.0), config)?;
    while 2.0 * t <= max_horizon {
        t *= 2.0;
        let next = riccati_integrate(r_of_t, &zero, (-t, 0.0), config)?;
        if next.blowup_flag {
            return Err(Error::Blowup { time: next.t });
        }
        let residual = (&next.v - &prev.v).norm();
        if residual <= tol {
            let rank = v_rank(&next.v);
            return Ok(RiccatiState { t, convergence_residual: residual, rank, ..next });
        }
        prev = next;
    }
    Err(Error::NoConvergence(format!("unstable Riccati solution not converged by T = {t}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnstableConfig {
    /// Step of the backward tangent flow.
    pub dt: f64,
    pub max_horizon: f64,
    pub tol: f64,
    pub scheme: Option<Scheme>,
    /// Re-orthonormalize the transported frame every this many steps.
    pub reorthonormalize_every: usize,
    pub curvature: JacobiConfig,
}

impl Default for UnstableConfig {
    fn default() -> Self {
        Self { dt: 1e-3, max_horizon: 256.0, tol: 1e-6, scheme: None, reorthonormalize_every: 50, curvature: JacobiConfig::default() }
    }
}

impl UnstableConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.max_horizon > 0.0 && self.tol > 0.0) || self.reorthonormalize_every == 0 {
            return Err(Error::InvalidInput("unstable solution parameters must be positive".into()));
        }
        self.curvature.validate()
    }

    pub(crate) fn integrator(&self, system: &HamiltonianSystem) -> Result<IntegratorConfig> {
        let base = match self.scheme {
            Some(s) => IntegratorConfig::new(s, self.dt)?,
            None => IntegratorConfig::for_system(system, self.dt)?,
        };
        Ok(base.with_recenter(true))
    }
}

/// Coordinates `(η, ξ)` of a frame of `W_z` in the basis `[e | ė]` at `z`,
/// and the resulting `V = −ηξ⁻¹` (symmetrized).
pub(crate) fn graph_operator(c: &CurvatureComputation, frame: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = c.chart.dim();
    let edot = c.frame_derivative()?;
    let mut basis = DMatrix::zeros(frame.nrows(), 2 * k);
    basis.columns_mut(0, k).copy_from(&c.chart.e);
    basis.columns_mut(k, k).copy_from(&edot);
    let ata = basis.transpose() * &basis;
    let coef = linalg::inverse(&ata).ok_or(Error::RankDeficient { rank: linalg::rank(&basis, 1e-12), expected: 2 * k })?
        * basis.transpose()
        * frame;
    let eta = coef.rows(0, k).into_owned();
    let xi = coef.rows(k, k).into_owned();
    let xi_inv = linalg::inverse(&xi).ok_or(Error::GraphUndefined { condition: linalg::inverse_condition(&xi) })?;
    Ok(linalg::symmetrize(&-(eta * xi_inv)))
}

/// Frame of `J̄°` (the derivative subspace, `V = 0`) at a point, in full
/// phase coordinates.
fn derivative_subspace(c: &CurvatureComputation) -> Result<DMatrix<f64>> {
    c.frame_derivative()
}

fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().qr().q()
}

/// Backward trajectory from `z` with the step Jacobians, extended on demand.
struct Backward<'a> {
    system: &'a HamiltonianSystem,
    integ: IntegratorConfig,
    points: Vec<PhasePoint>,
    jacobians: Vec<DMatrix<f64>>,
}

impl<'a> Backward<'a> {
    fn extend_to(&mut self, steps: usize) -> Result<()> {
        while self.jacobians.len() < steps {
            let cur = self.points.last().expect("start point");
            let (w, m) = flow::step_with_tangent(self.system, cur, -self.integ.dt, &self.integ)?;
            self.points.push(w);
            self.jacobians.push(m);
        }
        Ok(())
    }
}

/// Unstable solution `V_z`: the graph operator over `J̄°` of the limit of
/// the derivative subspaces of `φ^{−T} z` transported to `z`, as `T → ∞`.
/// `horizon` is the first `T`; it doubles until `‖V_T − V_{2T}‖ ≤ tol`.
pub fn unstable_solution(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    horizon: f64,
    config: &UnstableConfig,
) -> Result<RiccatiState> {
    config.validate()?;
    if !(horizon > 0.0) || horizon > config.max_horizon {
        return Err(Error::InvalidInput(format!("horizon must lie in (0, {}]", config.max_horizon)));
    }
    let at_z = reduced_curvature(system, z, &config.curvature)?;
    let red_z = at_z.reduction.clone().expect("reduced computation carries its reduction");
    let mut back = Backward { system, integ: config.integrator(system)?, points: vec![z.clone()], jacobians: Vec::new() };
    let mut value_at = |t: f64| -> Result<DMatrix<f64>> {
        let steps = (t / config.dt).round().max(1.0) as usize;
        back.extend_to(steps)?;
        let w = &back.points[steps];
        let at_w = reduced_curvature(system, w, &config.curvature)?;
        let mut frame = derivative_subspace(&at_w)?;
        for (i, m) in back.jacobians[..steps].iter().rev().enumerate() {
            frame = m.clone().lu().solve(&frame).ok_or(Error::NonFinite("backward step Jacobian"))?;
            if (i + 1) % config.reorthonormalize_every == 0 {
                frame = orthonormalize(&frame);
            }
        }
        graph_operator(&at_z, &red_z.project_frame(&frame))
    };
    let mut t = horizon;
    let mut prev = value_at(t)?;
    while 2.0 * t <= config.max_horizon {
        t *= 2.0;
        let next = value_at(t)?;
        let residual = (&next - &prev).norm();
        if residual <= config.tol {
            let rank = v_rank(&next);
            return Ok(RiccatiState { v: next, t, blowup_flag: false, convergence_residual: residual, rank });
        }
        prev = next;
    }
    Err(Error::NoConvergence(format!("unstable solution not converged by T = {t}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant(x: f64) -> impl FnMut(f64) -> Result<DMatrix<f64>> {
        move |_| Ok(DMatrix::from_element(1, 1, x))
    }

    #[test]
    fn tanh_solution() {
        let s = riccati_integrate(&mut constant(-1.0), &DMatrix::zeros(1, 1), (0.0, 5.0), &RiccatiConfig::default()).unwrap();
        assert!(!s.blowup_flag);
        assert!((s.v[(0, 0)] - 5.0f64.tanh()).abs() < 1e-6);
        assert!((s.v[(0, 0)] - 0.99991).abs() < 1e-5);
    }

    #[test]
    fn flat_fixed_point() {
        let s = riccati_integrate(&mut constant(0.0), &DMatrix::zeros(1, 1), (0.0, 3.0), &RiccatiConfig::default()).unwrap();
        assert_eq!(s.v[(0, 0)], 0.0);
        assert_eq!(s.rank, 0);
    }

    #[test]
    fn tangent_blowup_is_flagged() {
        let s = riccati_integrate(&mut constant(1.0), &DMatrix::zeros(1, 1), (0.0, 3.0), &RiccatiConfig::default()).unwrap();
        assert!(s.blowup_flag);
        assert!(s.t > 1.5 && s.t < 1.6, "blowup at {}", s.t);
    }

    #[test]
    fn linear_system_reproduces_riccati() {
        let mut r = |t: f64| Ok(DMatrix::from_row_slice(2, 2, &[-1.0 - 0.3 * t.sin(), 0.2, 0.2, -0.5]));
        let v0 = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.2]);
        let cfg = RiccatiConfig::default();
        let s = riccati_integrate(&mut r, &v0, (0.0, 2.0), &cfg).unwrap();
        let (xi, eta) = linear_system_flow(&mut r, &DMatrix::identity(2, 2), &-&v0, (0.0, 2.0), &cfg).unwrap();
        let v = -(eta * xi.try_inverse().unwrap());
        assert_relative_eq!(s.v, v, epsilon = 1e-8);
    }

    #[test]
    fn unstable_riccati_with_flat_direction() {
        let mut r = |_t: f64| Ok(DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0])));
        let s = unstable_riccati(&mut r, 2, 4.0, 256.0, 1e-6, &RiccatiConfig::default()).unwrap();
        assert_relative_eq!(s.v[(0, 0)], 1.0, epsilon = 1e-6);
        assert!(s.v[(1, 1)].abs() < 1e-12);
        assert_eq!(s.rank, 1);
    }
}
