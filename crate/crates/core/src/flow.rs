//! Symplectic time stepping of `ẍh`, the discrete tangent flow, and the
//! reduction of tangent vectors to `Σ_z = ker(d_z h) / span{ẍh(z)}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::symplin::standard_form;
use crate::systems::{hamiltonian_vf, HamiltonianSystem, PhasePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Kick-drift-kick leapfrog; separable `½|p|² + U(q)` only.
    StormerVerlet,
    /// Implicit midpoint rule solved by Newton with the analytic Jacobian.
    ImplicitMidpoint,
    /// Forward Euler. Not symplectic: kept only so that verification runs can
    /// demonstrate that the symplectic checks detect a broken integrator.
    ExplicitEuler,
}

impl Scheme {
    /// Global order of accuracy.
    pub fn order(self) -> u32 {
        match self {
            Scheme::StormerVerlet | Scheme::ImplicitMidpoint => 2,
            Scheme::ExplicitEuler => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Apply chart isometries (half-plane recentering) between steps.
    pub recenter: bool,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Result<Self> {
        let c = Self { scheme, dt, newton_tol: 1e-13, newton_max_iter: 50, recenter: false };
        c.validate()?;
        Ok(c)
    }

    /// Störmer–Verlet when `h` is separable, implicit midpoint otherwise.
    pub fn for_system(system: &HamiltonianSystem, dt: f64) -> Result<Self> {
        let scheme = if system.is_separable() { Scheme::StormerVerlet } else { Scheme::ImplicitMidpoint };
        Self::new(scheme, dt)
    }

    pub fn with_recenter(mut self, on: bool) -> Self {
        self.recenter = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::InvalidInput("Newton tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn check_regular(system: &HamiltonianSystem, z: &PhasePoint) -> Result<()> {
    let f = hamiltonian_vf(system, z)?;
    if f.critical {
        return Err(Error::CriticalPoint { grad_norm: system.gradient(z)?.norm() });
    }
    Ok(())
}

/// One step of signed size `h` without wrapping; returns the new point and,
/// when requested, the exact Jacobian of the one-step map.
fn raw_step(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    h: f64,
    config: &IntegratorConfig,
    want_tangent: bool,
) -> Result<(PhasePoint, Option<DMatrix<f64>>)> {
    let n = system.n();
    match config.scheme {
        Scheme::StormerVerlet => {
            let u = system.potential().filter(|_| system.is_separable()).ok_or(Error::NonSeparable)?;
            let p_half = &z.p - u.gradient(&z.q) * (0.5 * h);
            let q1 = &z.q + &p_half * h;
            let p1 = &p_half - u.gradient(&q1) * (0.5 * h);
            let tangent = want_tangent.then(|| {
                let kick = |q: &DVector<f64>| {
                    let mut k = DMatrix::identity(2 * n, 2 * n);
                    k.view_mut((0, n), (n, n)).copy_from(&(u.hessian(q) * (-0.5 * h)));
                    k
                };
                let mut drift = DMatrix::identity(2 * n, 2 * n);
                drift.view_mut((n, 0), (n, n)).fill_diagonal(h);
                kick(&q1) * drift * kick(&z.q)
            });
            let w = PhasePoint { p: p1, q: q1 };
            if !w.is_finite() {
                return Err(Error::NonFinite("Stormer-Verlet step"));
            }
            Ok((w, tangent))
        }
        Scheme::ImplicitMidpoint => {
            let z0 = z.to_vector();
            let f0 = hamiltonian_vf(system, z)?.vector;
            let mut z1 = &z0 + f0 * h;
            let id = DMatrix::<f64>::identity(2 * n, 2 * n);
            let mut converged = false;
            let mut last = f64::INFINITY;
            for _ in 0..config.newton_max_iter {
                let mid = PhasePoint::from_vector(&((&z0 + &z1) * 0.5));
                let f = hamiltonian_vf(system, &mid)?.vector;
                let resid = &z1 - &z0 - f * h;
                let a = system.field_jacobian(&mid)?;
                let jac = &id - a * (0.5 * h);
                let delta = jac.lu().solve(&resid).ok_or(Error::NewtonFailed { iterations: 0, residual: resid.norm() })?;
                z1 -= &delta;
                last = delta.norm();
                if !last.is_finite() {
                    break;
                }
                if last <= config.newton_tol * (1.0 + z1.norm()) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NewtonFailed { iterations: config.newton_max_iter, residual: last });
            }
            let tangent = if want_tangent {
                let mid = PhasePoint::from_vector(&((&z0 + &z1) * 0.5));
                let a = system.field_jacobian(&mid)?;
                let lhs = &id - &a * (0.5 * h);
                let rhs = &id + &a * (0.5 * h);
                Some(lhs.lu().solve(&rhs).ok_or(Error::NonFinite("midpoint tangent"))?)
            } else {
                None
            };
            Ok((PhasePoint::from_vector(&z1), tangent))
        }
        Scheme::ExplicitEuler => {
            let f = hamiltonian_vf(system, z)?.vector;
            let w = PhasePoint::from_vector(&(z.to_vector() + f * h));
            let tangent = if want_tangent {
                Some(DMatrix::identity(2 * n, 2 * n) + system.field_jacobian(z)? * h)
            } else {
                None
            };
            Ok((w, tangent))
        }
    }
}

/// One step of size `config.dt`, periodic coordinates wrapped.
pub fn step(system: &HamiltonianSystem, z: &PhasePoint, config: &IntegratorConfig) -> Result<PhasePoint> {
    config.validate()?;
    check_regular(system, z)?;
    let (mut w, _) = raw_step(system, z, config.dt, config, false)?;
    system.wrap(&mut w);
    Ok(w)
}

/// One signed step together with the Jacobian of the step map. Chart moves
/// (wrapping, recentering when enabled) are folded into the returned point
/// and Jacobian.
pub fn step_with_tangent(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    h: f64,
    config: &IntegratorConfig,
) -> Result<(PhasePoint, DMatrix<f64>)> {
    check_regular(system, z)?;
    let (mut w, m) = raw_step(system, z, h, config, true)?;
    let mut m = m.expect("tangent requested");
    system.wrap(&mut w);
    if config.recenter {
        if let Some((moved, map)) = system.recenter(&w) {
            w = moved;
            m = map * m;
        }
    }
    Ok((w, m))
}

/// Sampled base trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    /// `max_t |h(z_t) − h(z₀)|`.
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn last(&self) -> &PhasePoint {
        self.points.last().expect("trajectory has at least the initial point")
    }
}

fn step_count(t: f64, dt: f64) -> usize {
    let k = (t.abs() / dt - 1e-9).ceil();
    k.max(0.0) as usize
}

/// Flow for signed time `t`: `⌈|t|/dt⌉` equal steps landing exactly on `t`.
pub fn flow(system: &HamiltonianSystem, z: &PhasePoint, t: f64, config: &IntegratorConfig) -> Result<Trajectory> {
    config.validate()?;
    let e0 = system.energy(z)?;
    let steps = step_count(t, config.dt);
    let h = if steps == 0 { 0.0 } else { t / steps as f64 };
    let mut times = vec![0.0];
    let mut points = vec![z.clone()];
    let mut cur = z.clone();
    let mut drift = 0.0f64;
    for k in 1..=steps {
        check_regular(system, &cur)?;
        let (mut w, _) = raw_step(system, &cur, h, config, false)?;
        system.wrap(&mut w);
        if config.recenter {
            if let Some((moved, _)) = system.recenter(&w) {
                w = moved;
            }
        }
        drift = drift.max((system.energy(&w)? - e0).abs());
        times.push(h * k as f64);
        points.push(w.clone());
        cur = w;
    }
    Ok(Trajectory { times, points, energy_drift: drift })
}

/// Base points and pushed-forward frames.
#[derive(Debug, Clone)]
pub struct TangentTrajectory {
    pub times: Vec<f64>,
    pub base_points: Vec<PhasePoint>,
    pub frames: Vec<DMatrix<f64>>,
    pub energy_drift: f64,
}

/// Discrete variational flow: the frame is multiplied by the exact Jacobian
/// of each numerical step.
pub fn tangent_flow(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    frame: &DMatrix<f64>,
    t: f64,
    config: &IntegratorConfig,
) -> Result<TangentTrajectory> {
    config.validate()?;
    if frame.nrows() != 2 * system.n() {
        return Err(Error::DimensionMismatch { expected: 2 * system.n(), got: frame.nrows() });
    }
    let e0 = system.energy(z)?;
    let steps = step_count(t, config.dt);
    let h = if steps == 0 { 0.0 } else { t / steps as f64 };
    let mut out = TangentTrajectory {
        times: vec![0.0],
        base_points: vec![z.clone()],
        frames: vec![frame.clone()],
        energy_drift: 0.0,
    };
    let mut cur = z.clone();
    let mut x = frame.clone();
    for k in 1..=steps {
        let (w, m) = step_with_tangent(system, &cur, h, config)?;
        x = m * x;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tangent frame"));
        }
        out.energy_drift = out.energy_drift.max((system.energy(&w)? - e0).abs());
        out.times.push(h * k as f64);
        out.base_points.push(w.clone());
        out.frames.push(x.clone());
        cur = w;
    }
    Ok(out)
}

/// Base points and accumulated tangent maps at the integer step indices in
/// `indices` (negative indices step backwards). Index 0 gives `(z, I)`.
pub fn tangent_maps(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    dt: f64,
    indices: &[i64],
    config: &IntegratorConfig,
) -> Result<Vec<(PhasePoint, DMatrix<f64>)>> {
    let dim = 2 * system.n();
    let mut out = vec![None; indices.len()];
    for dir in [1i64, -1] {
        let far = indices.iter().filter(|&&k| k * dir > 0).map(|&k| k.abs()).max().unwrap_or(0);
        let mut cur = z.clone();
        let mut m = DMatrix::identity(dim, dim);
        for (slot, &k) in out.iter_mut().zip(indices) {
            if k == 0 {
                *slot = Some((z.clone(), m.clone()));
            }
        }
        for s in 1..=far {
            let (w, step_m) = step_with_tangent(system, &cur, dir as f64 * dt, config)?;
            m = step_m * m;
            cur = w;
            for (slot, &k) in out.iter_mut().zip(indices) {
                if k == dir * s {
                    *slot = Some((cur.clone(), m.clone()));
                }
            }
        }
    }
    Ok(out.into_iter().map(|x| x.expect("every index visited")).collect())
}

/// Splitting of `T_z M` used to realize `Σ_z`.
///
/// `Y` is the metric-normalized gradient direction (`⟨∇h, Y⟩ = 1`), and the
/// representative subspace `W` is the σ-orthogonal complement of
/// `span{ẍh, Y}`, which lies inside `ker d_z h`.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub base: PhasePoint,
    pub gradient: DVector<f64>,
    pub field: DVector<f64>,
    pub transversal: DVector<f64>,
    /// Phase-space metric factor `L` (`G = LᵀL`).
    pub metric_map: DMatrix<f64>,
}

impl Reduction {
    pub fn at(system: &HamiltonianSystem, z: &PhasePoint) -> Result<Self> {
        let f = hamiltonian_vf(system, z)?;
        let gradient = system.gradient(z)?;
        if f.critical {
            return Err(Error::CriticalPoint { grad_norm: gradient.norm() });
        }
        let metric_map = system.phase_metric_map(z)?;
        let g = metric_map.transpose() * &metric_map;
        let gi = linalg::inverse(&g).ok_or(Error::NonFinite("phase metric"))?;
        let y = &gi * &gradient;
        let y = &y / gradient.dot(&y);
        Ok(Self { base: z.clone(), gradient, field: f.vector, transversal: y, metric_map })
    }

    fn sigma(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        let n = v.len() / 2;
        (0..n).map(|i| v[i] * w[n + i] - w[i] * v[n + i]).sum()
    }

    /// Removes the `Y` component (measured by `⟨∇h, ·⟩`) and then the `ẍh`
    /// component, landing in `W`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let v1 = v - &self.transversal * self.gradient.dot(v);
        let c = self.sigma(&self.transversal, &v1);
        v1 - &self.field * c
    }

    pub fn project_frame(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = m.column_iter().map(|c| self.project(&c.into_owned())).collect();
        if cols.is_empty() {
            return DMatrix::zeros(m.nrows(), 0);
        }
        DMatrix::from_columns(&cols)
    }

    /// Basis of `W`, orthonormal for the phase metric.
    pub fn basis(&self) -> Result<DMatrix<f64>> {
        let dim = self.field.len();
        let space = standard_form(dim / 2);
        let j = space.form();
        let mut rows = DMatrix::zeros(2, dim);
        rows.set_row(0, &(j * &self.field).transpose());
        rows.set_row(1, &(j * &self.transversal).transpose());
        let li = linalg::inverse(&self.metric_map).ok_or(Error::NonFinite("phase metric"))?;
        let mut rows = rows * &li;
        // The two constraints can differ in scale by many orders of magnitude.
        for mut r in rows.row_iter_mut() {
            let norm = r.norm();
            if norm > 0.0 {
                r /= norm;
            }
        }
        let null = linalg::null_space(&rows, 1e-10);
        if null.ncols() != dim - 2 {
            return Err(Error::RankDeficient { rank: null.ncols(), expected: dim - 2 });
        }
        Ok(li * null)
    }
}

/// Reduced representative of each input vector.
#[derive(Debug, Clone)]
pub struct ReducedFrame {
    pub columns: DMatrix<f64>,
    pub base: PhasePoint,
}

pub fn reduce(system: &HamiltonianSystem, z: &PhasePoint, vectors: &DMatrix<f64>) -> Result<ReducedFrame> {
    if vectors.nrows() != 2 * system.n() {
        return Err(Error::DimensionMismatch { expected: 2 * system.n(), got: vectors.nrows() });
    }
    let r = Reduction::at(system, z)?;
    Ok(ReducedFrame { columns: r.project_frame(vectors), base: z.clone() })
}
