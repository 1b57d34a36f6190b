//! Lyapunov spectrum of the reduced flow by repeated QR renormalization
//! (Benettin's method) in the phase metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{self, IntegratorConfig, Reduction, Scheme};
use crate::linalg;
use crate::systems::{HamiltonianSystem, PhasePoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    pub dt: f64,
    pub scheme: Option<Scheme>,
    /// Fraction of the horizon discarded before accumulating.
    pub transient_fraction: f64,
    /// Column norm that triggers an early renormalization.
    pub overflow_norm: f64,
    /// Upper bound on the number of rows in `convergence_history`.
    pub history_points: usize,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self { dt: 1e-3, scheme: None, transient_fraction: 0.1, overflow_norm: 1e6, history_points: 200 }
    }
}

impl LyapunovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(0.0..0.9).contains(&self.transient_fraction) {
            return Err(Error::InvalidInput("transient_fraction must lie in [0, 0.9)".into()));
        }
        if !(self.overflow_norm > 1.0) {
            return Err(Error::InvalidInput("overflow_norm must exceed 1".into()));
        }
        Ok(())
    }

    pub fn integrator(&self, system: &HamiltonianSystem) -> Result<IntegratorConfig> {
        let base = match self.scheme {
            Some(s) => IntegratorConfig::new(s, self.dt)?,
            None => IntegratorConfig::for_system(system, self.dt)?,
        };
        Ok(base.with_recenter(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    /// Descending, `2n − 2` values.
    pub exponents: Vec<f64>,
    pub chi: f64,
    pub horizon: f64,
    pub renorm_interval: f64,
    /// `max_i |λ_i + λ_{k−1−i}|`.
    pub pairing_defect: f64,
    /// Running estimates `(t, exponents)` after the transient.
    pub convergence_history: Vec<(f64, Vec<f64>)>,
    pub energy_drift: f64,
}

pub fn chi_of(exponents: &[f64]) -> f64 {
    linalg::tree_sum(&exponents.iter().map(|&l| l.max(0.0)).collect::<Vec<_>>())
}

pub fn pairing_defect(exponents: &[f64]) -> f64 {
    let k = exponents.len();
    (0..k / 2).map(|i| (exponents[i] + exponents[k - 1 - i]).abs()).fold(0.0, f64::max)
}

/// Lyapunov exponents of the reduced flow at `z` over `[0, horizon]`.
///
/// A phase-metric orthonormal basis of `W_z` is pushed by the step
/// Jacobians. At each renormalization the frame is projected back onto
/// `W` at the current point and QR-factorized in the phase metric; the
/// logarithms of `|diag R|` are accumulated once the transient is over.
pub fn lyapunov_spectrum(
    system: &HamiltonianSystem,
    z: &PhasePoint,
    horizon: f64,
    renorm_interval: f64,
    config: &LyapunovConfig,
) -> Result<LyapunovSpectrum> {
    config.validate()?;
    if !(renorm_interval > 0.0) || !(horizon > renorm_interval) {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon} must exceed the renormalization interval {renorm_interval} > 0"
        )));
    }
    let integ = config.integrator(system)?;
    let steps = (horizon / config.dt).round().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let integ = IntegratorConfig { dt, ..integ };
    let every = ((renorm_interval / dt).round() as usize).max(1);
    let transient = (config.transient_fraction * steps as f64).round() as usize;
    let history_stride = (steps / every / config.history_points.max(1)).max(1);

    let e0 = system.energy(z)?;
    let mut drift = 0.0f64;
    let red = Reduction::at(system, z)?;
    let mut frame = red.basis()?;
    let k = frame.ncols();
    let mut sums = vec![0.0; k];
    let mut start: Option<f64> = if transient == 0 { Some(0.0) } else { None };
    let mut renorms = 0usize;
    let mut history = Vec::new();
    let mut cur = z.clone();
    for s in 1..=steps {
        let (w, m) = flow::step_with_tangent(system, &cur, dt, &integ)?;
        frame = m * frame;
        cur = w;
        let col_max = frame.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !col_max.is_finite() {
            return Err(if renorms == 0 { Error::TangentOverflow } else { Error::NonFinite("tangent frame") });
        }
        if s % every != 0 && s != steps && col_max <= config.overflow_norm {
            continue;
        }
        drift = drift.max((system.energy(&cur)? - e0).abs());
        let red = Reduction::at(system, &cur)?;
        let projected = red.project_frame(&frame);
        let qr = (&red.metric_map * &projected).qr();
        let r = qr.r();
        let t = s as f64 * dt;
        if start.is_some() {
            for (i, sum) in sums.iter_mut().enumerate() {
                *sum += r[(i, i)].abs().ln();
            }
        } else if s >= transient {
            start = Some(t);
        }
        let li = linalg::inverse(&red.metric_map).ok_or(Error::NonFinite("phase metric"))?;
        frame = li * qr.q();
        renorms += 1;
        if let Some(t0) = start {
            if t > t0 && (renorms % history_stride == 0 || s == steps) {
                let mut running: Vec<f64> = sums.iter().map(|x| x / (t - t0)).collect();
                running.sort_by(|a, b| b.total_cmp(a));
                history.push((t, running));
            }
        }
    }
    let t0 = start.unwrap_or(0.0);
    let span = horizon - t0;
    if !(span > 0.0) {
        return Err(Error::InvalidInput("transient leaves no averaging window".into()));
    }
    let mut exponents: Vec<f64> = sums.iter().map(|x| x / span).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovSpectrum {
        chi: chi_of(&exponents),
        pairing_defect: pairing_defect(&exponents),
        exponents,
        horizon,
        renorm_interval,
        convergence_history: history,
        energy_drift: drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{custom, geodesic2d, CustomHamiltonian, HyperbolicHalfPlane, Topology};
    use nalgebra::{DMatrix, DVector};
    use std::sync::Arc;

    #[test]
    fn hyperbolic_exponents_are_plus_minus_one() {
        let sys = geodesic2d(Arc::new(HyperbolicHalfPlane));
        let z = PhasePoint::from_slices(&[0.6, 0.8], &[0.3, 1.0]);
        let s = lyapunov_spectrum(&sys, &z, 200.0, 0.5, &LyapunovConfig::default()).unwrap();
        assert!((s.exponents[0] - 1.0).abs() < 1e-2, "{:?}", s.exponents);
        assert!((s.exponents[1] + 1.0).abs() < 1e-2, "{:?}", s.exponents);
        assert!(s.pairing_defect < 1e-3);
        assert!(!s.convergence_history.is_empty());
    }

    #[test]
    fn linear_saddle() {
        // h = ½(p₁² + p₂²) − ½ q₁² + ½ q₂²: one hyperbolic and one elliptic plane.
        let h = CustomHamiltonian {
            h: Arc::new(|z: &PhasePoint| 0.5 * (z.p.norm_squared() - z.q[0] * z.q[0] + z.q[1] * z.q[1])),
            grad: Arc::new(|z: &PhasePoint| DVector::from_vec(vec![z.p[0], z.p[1], -z.q[0], z.q[1]])),
            hess: Arc::new(|_: &PhasePoint| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, -1.0, 1.0]))),
        };
        let sys = custom(2, h, vec![Topology::Unbounded; 2]).unwrap();
        let z = PhasePoint::from_slices(&[0.0, 1.0], &[0.0, 0.0]);
        let s = lyapunov_spectrum(&sys, &z, 30.0, 0.5, &LyapunovConfig::default()).unwrap();
        assert!((s.exponents[0] - 1.0).abs() < 0.1, "{:?}", s.exponents);
        assert!((s.exponents[1] + 1.0).abs() < 0.1, "{:?}", s.exponents);
    }

    #[test]
    fn horizon_must_exceed_interval() {
        let sys = geodesic2d(Arc::new(HyperbolicHalfPlane));
        let z = PhasePoint::from_slices(&[0.6, 0.8], &[0.3, 1.0]);
        assert!(lyapunov_spectrum(&sys, &z, 0.2, 0.5, &LyapunovConfig::default()).is_err());
    }
}
