//! Sampling the normalized Liouville measure on a regular level set `{h = E}`.
//!
//! Families with quadratic kinetic energy `½ pᵀ g(q)⁻¹ p + U(q)` use the exact
//! microcanonical factorization: the `q`-marginal has density proportional to
//! `√det g · (E − U)^{(n−2)/2}` on `{U < E}` and, given `q`, the momentum is
//! uniform on the ellipsoid `|p|_{g⁻¹}² = 2(E − U)`. For `n = 1` the marginal
//! `(E − U)^{-1/2}` blows up at turning points, so each arc `[a, b]` of
//! `{U < E}` is reparametrized by `q = (a+b)/2 − (b−a)/2 · cos θ`, which makes
//! the density bounded, and sampled by rejection in `θ`. Custom callbacks go
//! through a Metropolis walk on the level set with density `1/|∇h|` relative
//! to surface area.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{FamilyTag, HamiltonianSystem, PhasePoint, Topology};
use crate::error::{Error, Result};
use crate::linalg;

const PROJECTION_TOL: f64 = 1e-12;
const LEVEL_TOL: f64 = 1e-10;
const PILOT_DRAWS: usize = 4096;
const BURN_IN: usize = 1000;
const THINNING: usize = 10;

/// A regular energy level together with the box used to sample positions.
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub system: HamiltonianSystem,
    pub energy: f64,
    /// Position window `[lo, hi)` per coordinate. Periodic coordinates default
    /// to `[0, L)`; unbounded ones must be given explicitly.
    pub window: Vec<(f64, f64)>,
    /// Half-width of the momentum box used to seed the Metropolis walk.
    pub momentum_bound: f64,
    /// Standard deviation of tangent proposals in the Metropolis walk.
    pub mcmc_step: f64,
    pub regularity_floor: f64,
}

impl LevelSet {
    /// Builds the level set and measures its regularity floor on a pilot
    /// sample. `window` entries of `None` fall back to the period.
    pub fn new(system: HamiltonianSystem, energy: f64, window: Vec<Option<(f64, f64)>>) -> Result<Self> {
        let n = system.n();
        if window.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: window.len() });
        }
        let mut resolved = Vec::with_capacity(n);
        for (i, w) in window.into_iter().enumerate() {
            let w = match (w, system.topology()[i]) {
                (Some(w), _) => w,
                (None, Topology::Periodic(l)) => (0.0, l),
                (None, Topology::Unbounded) => {
                    return Err(Error::InvalidInput(format!(
                        "coordinate q{} is unbounded and needs an explicit sampling window",
                        i + 1
                    )))
                }
            };
            if !(w.0 < w.1 && w.0.is_finite() && w.1.is_finite()) {
                return Err(Error::InvalidInput(format!("empty sampling window for q{}", i + 1)));
            }
            resolved.push(w);
        }
        let mut ls = Self {
            system,
            energy,
            window: resolved,
            momentum_bound: (2.0 * energy.abs()).sqrt().max(1.0) * 2.0,
            mcmc_step: 0.2,
            regularity_floor: 0.0,
        };
        let pilot = liouville_sample(&ls, 64, 0x5eed)?;
        let mut floor = f64::INFINITY;
        for z in &pilot {
            floor = floor.min(ls.system.gradient(z)?.norm());
        }
        if !(floor > 0.0) {
            return Err(Error::CriticalPoint { grad_norm: floor });
        }
        ls.regularity_floor = floor;
        Ok(ls)
    }

    pub fn with_mcmc_step(mut self, step: f64) -> Self {
        self.mcmc_step = step;
        self
    }

    fn exact_path(&self) -> bool {
        self.system.n() >= 2 && self.system.family() != FamilyTag::Custom
    }
}

/// Draws `count` points from the normalized Liouville measure, deterministic
/// given `seed`.
pub fn liouville_sample(level: &LevelSet, count: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if level.system.n() == 1 && level.system.family() == FamilyTag::Mechanical {
        arc_samples(level, count, &mut rng)
    } else if level.exact_path() {
        exact_samples(level, count, &mut rng)
    } else {
        metropolis_samples(level, count, &mut rng)
    }
}

fn uniform_q(level: &LevelSet, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_iterator(level.window.len(), level.window.iter().map(|&(lo, hi)| rng.random_range(lo..hi)))
}

/// `√det g(q) · (E − U)^{(n−2)/2}` on `{U < E}`, with `g = I` for mechanical.
fn q_density(level: &LevelSet, q: &DVector<f64>) -> f64 {
    let sys = &level.system;
    let u = match sys.potential_value(q) {
        Some(u) => u,
        None => return 0.0,
    };
    let slack = level.energy - u;
    if !(slack > 0.0) {
        return 0.0;
    }
    let vol = match sys.metric() {
        Some(m) => {
            let g = m.g(&nalgebra::Vector2::new(q[0], q[1]));
            let d = g.determinant();
            if !(d > 0.0 && d.is_finite()) {
                return 0.0;
            }
            d.sqrt()
        }
        None => 1.0,
    };
    let n = sys.n() as f64;
    vol * slack.powf(0.5 * (n - 2.0))
}

fn exact_samples(level: &LevelSet, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<PhasePoint>> {
    let sys = &level.system;
    let n = sys.n();
    let mut bound = 0.0f64;
    for _ in 0..PILOT_DRAWS {
        bound = bound.max(q_density(level, &uniform_q(level, rng)));
    }
    if bound <= 0.0 {
        return Err(Error::SamplerFailed(format!(
            "no point with U < E = {} found in the sampling window",
            level.energy
        )));
    }
    bound *= 1.25;
    let max_proposals = 10_000 * count.max(100);
    let mut out = Vec::with_capacity(count);
    let mut proposals = 0usize;
    while out.len() < count {
        proposals += 1;
        if proposals > max_proposals {
            return Err(Error::SamplerFailed("rejection sampler acceptance rate too low".into()));
        }
        let q = uniform_q(level, rng);
        let d = q_density(level, &q);
        if d > bound {
            // Pilot underestimated the envelope; restart with a safe bound so
            // accepted points remain exactly distributed.
            bound = 1.25 * d;
            out.clear();
            continue;
        }
        if rng.random::<f64>() * bound >= d {
            continue;
        }
        let u = sys.potential_value(&q).unwrap_or(0.0);
        let radius = (2.0 * (level.energy - u)).sqrt();
        let dir = loop {
            let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = v.norm();
            if norm > 1e-12 {
                break v / norm;
            }
        };
        let mut p = dir * radius;
        if let Some(m) = sys.metric() {
            let g = m.g(&nalgebra::Vector2::new(q[0], q[1]));
            let gm = DMatrix::from_column_slice(2, 2, g.as_slice());
            p = linalg::sym_sqrt(&gm) * p;
        }
        let mut z = PhasePoint { p, q };
        project_to_level(sys, level.energy, &mut z)?;
        sys.wrap(&mut z);
        out.push(z);
    }
    Ok(out)
}

const ARC_GRID: usize = 4096;

/// A connected piece of `{U < E}` for `n = 1`.
#[derive(Debug, Clone, Copy)]
enum Segment {
    /// Turning points or window edges at both ends.
    Interval(f64, f64),
    /// The whole circle of length `L`: a rotating orbit in each direction.
    Circle(f64),
}

impl Segment {
    fn range(self) -> f64 {
        match self {
            Segment::Interval(..) => std::f64::consts::PI,
            Segment::Circle(l) => l,
        }
    }

    /// Position and unnormalized density at parameter `s`.
    fn at(self, level: &LevelSet, s: f64) -> (f64, f64) {
        let (q, jac) = match self {
            Segment::Interval(a, b) => (0.5 * (a + b) - 0.5 * (b - a) * s.cos(), 0.5 * (b - a) * s.sin()),
            Segment::Circle(_) => (s, 1.0),
        };
        let slack = slack_at(level, q);
        (q, if slack > 0.0 { jac / slack.sqrt() } else { 0.0 })
    }
}

fn slack_at(level: &LevelSet, q: f64) -> f64 {
    level.system.potential_value(&DVector::from_element(1, q)).map_or(f64::NEG_INFINITY, |u| level.energy - u)
}

/// Arcs of `{U < E}` inside the window, with turning points refined by bisection.
fn segments(level: &LevelSet) -> Vec<Segment> {
    let (lo, hi) = level.window[0];
    let grid: Vec<f64> = (0..=ARC_GRID).map(|k| lo + (hi - lo) * k as f64 / ARC_GRID as f64).collect();
    let slack: Vec<f64> = grid.iter().map(|&q| slack_at(level, q)).collect();
    let period = match level.system.topology()[0] {
        Topology::Periodic(l) if (hi - lo - l).abs() <= 1e-12 * l => Some(l),
        _ => None,
    };
    if let Some(l) = period {
        if slack.iter().all(|&s| s > 0.0) {
            return vec![Segment::Circle(l)];
        }
    }
    let root = |mut a: f64, mut b: f64| {
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if slack_at(level, m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        a
    };
    let mut out = Vec::new();
    let mut start = (slack[0] > 0.0).then_some(lo);
    for k in 1..grid.len() {
        match (slack[k - 1] > 0.0, slack[k] > 0.0) {
            (false, true) => start = Some(root(grid[k], grid[k - 1])),
            (true, false) => {
                if let Some(a) = start.take() {
                    out.push((a, root(grid[k - 1], grid[k])));
                }
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        out.push((a, hi));
    }
    // An arc straddling the seam of the circle.
    if let (Some(l), true) = (period, out.len() > 1) {
        let first = out[0];
        let last = out[out.len() - 1];
        if first.0 == lo && last.1 == hi {
            out.pop();
            out[0] = (last.0 - l, first.1);
        }
    }
    out.into_iter().map(|(a, b)| Segment::Interval(a, b)).collect()
}

fn arc_samples(level: &LevelSet, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<PhasePoint>> {
    let sys = &level.system;
    let segs = segments(level);
    if segs.is_empty() {
        return Err(Error::SamplerFailed(format!(
            "no point with U < E = {} found in the sampling window",
            level.energy
        )));
    }
    let mut bounds: Vec<f64> = segs
        .iter()
        .map(|&seg| {
            let r = seg.range();
            1.25 * (0..=PILOT_DRAWS).map(|k| seg.at(level, r * k as f64 / PILOT_DRAWS as f64).1).fold(0.0, f64::max)
        })
        .collect();
    let max_proposals = 10_000 * count.max(100);
    let mut out = Vec::with_capacity(count);
    let mut proposals = 0usize;
    while out.len() < count {
        proposals += 1;
        if proposals > max_proposals {
            return Err(Error::SamplerFailed("rejection sampler acceptance rate too low".into()));
        }
        let masses: Vec<f64> = segs.iter().zip(&bounds).map(|(seg, m)| seg.range() * m).collect();
        let mut pick = rng.random::<f64>() * masses.iter().sum::<f64>();
        let mut i = 0;
        while i + 1 < masses.len() && pick >= masses[i] {
            pick -= masses[i];
            i += 1;
        }
        let (q, d) = segs[i].at(level, rng.random::<f64>() * segs[i].range());
        if d > bounds[i] {
            bounds[i] = 1.25 * d;
            out.clear();
            continue;
        }
        if rng.random::<f64>() * bounds[i] >= d {
            continue;
        }
        let speed = (2.0 * slack_at(level, q)).sqrt();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut z = PhasePoint { p: DVector::from_element(1, sign * speed), q: DVector::from_element(1, q) };
        project_to_level(sys, level.energy, &mut z)?;
        sys.wrap(&mut z);
        out.push(z);
    }
    Ok(out)
}

/// Newton iteration along `∇h` onto `{h = E}`.
pub fn project_to_level(sys: &HamiltonianSystem, energy: f64, z: &mut PhasePoint) -> Result<()> {
    let scale = energy.abs().max(1.0);
    for _ in 0..50 {
        let r = sys.energy(z)? - energy;
        if r.abs() <= PROJECTION_TOL * scale {
            return Ok(());
        }
        let g = sys.gradient(z)?;
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            return Err(Error::CriticalPoint { grad_norm: 0.0 });
        }
        let x = z.to_vector() - g * (r / g2);
        *z = PhasePoint::from_vector(&x);
    }
    let r = sys.energy(z)? - energy;
    if r.abs() <= LEVEL_TOL * scale {
        Ok(())
    } else {
        Err(Error::NewtonFailed { iterations: 50, residual: r.abs() })
    }
}

/// Solves `h(x + a·n) = E` for the scalar `a`, starting from zero.
fn retract(sys: &HamiltonianSystem, energy: f64, x: &DVector<f64>, normal: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = energy.abs().max(1.0);
    let mut a = 0.0;
    for _ in 0..30 {
        let y = x + normal * a;
        let z = PhasePoint::from_vector(&y);
        let r = sys.energy(&z).ok()? - energy;
        if r.abs() <= PROJECTION_TOL * scale {
            return Some(y);
        }
        let slope = sys.gradient(&z).ok()?.dot(normal);
        if slope.abs() < 1e-14 {
            return None;
        }
        a -= r / slope;
        if !a.is_finite() {
            return None;
        }
    }
    None
}

fn in_window(level: &LevelSet, y: &DVector<f64>) -> bool {
    let n = level.system.n();
    level.window.iter().enumerate().all(|(i, &(lo, hi))| match level.system.topology()[i] {
        Topology::Periodic(_) => true,
        Topology::Unbounded => (lo..hi).contains(&y[n + i]),
    })
}

fn metropolis_samples(level: &LevelSet, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<PhasePoint>> {
    let sys = &level.system;
    let n = sys.n();
    let dim = 2 * n;

    // Seed: random box points projected onto the level set.
    let mut x = None;
    for _ in 0..1000 {
        let q = uniform_q(level, rng);
        let p = DVector::from_fn(n, |_, _| rng.random_range(-level.momentum_bound..level.momentum_bound));
        let mut z = PhasePoint { p, q };
        if project_to_level(sys, level.energy, &mut z).is_ok() && in_window(level, &z.to_vector()) {
            x = Some(z.to_vector());
            break;
        }
    }
    let mut x = x.ok_or_else(|| Error::SamplerFailed(format!("could not locate the level h = {}", level.energy)))?;

    let density = |v: &DVector<f64>| -> Option<(f64, DVector<f64>)> {
        let g = sys.gradient(&PhasePoint::from_vector(v)).ok()?;
        let norm = g.norm();
        (norm > 0.0).then(|| (1.0 / norm, g / norm))
    };
    let (mut pi_x, mut n_x) = density(&x).ok_or(Error::CriticalPoint { grad_norm: 0.0 })?;
    let s2 = level.mcmc_step * level.mcmc_step;

    let total = BURN_IN + THINNING * count;
    let mut out = Vec::with_capacity(count);
    for it in 0..total {
        let xi = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal) * level.mcmc_step);
        let v = &xi - &n_x * xi.dot(&n_x);
        let u: f64 = rng.random();
        if let Some(y) = retract(sys, level.energy, &(&x + &v), &n_x) {
            if in_window(level, &y) {
                if let Some((pi_y, n_y)) = density(&y) {
                    let d = &x - &y;
                    let v_back = &d - &n_y * d.dot(&n_y);
                    let back = retract(sys, level.energy, &(&y + &v_back), &n_y);
                    let reversible = back.is_some_and(|b| (b - &x).norm() <= 1e-8 * (1.0 + x.norm()));
                    if reversible {
                        let log_ratio = (pi_y / pi_x).ln() - (v_back.norm_squared() - v.norm_squared()) / (2.0 * s2);
                        if u.ln() < log_ratio {
                            x = y;
                            pi_x = pi_y;
                            n_x = n_y;
                        }
                    }
                }
            }
        }
        if it >= BURN_IN && (it - BURN_IN) % THINNING == THINNING - 1 {
            let mut z = PhasePoint::from_vector(&x);
            sys.wrap(&mut z);
            out.push(z);
        }
    }
    Ok(out)
}
