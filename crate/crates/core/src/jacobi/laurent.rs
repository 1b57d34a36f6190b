//! Derivative element of a curve of Lagrangian graphs from the Laurent
//! expansion of the projector family `π_{J(t) J(c)}` around `t = c`.
//!
//! For a regular curve the projector onto `J(c+u)` along `J(c)` has a simple
//! pole, `π(c+u) = π₋₁/u + π₀ + π₁u + π₂u² + …`, and `π₀` is the projector
//! onto the derivative element `J°(c)` along `J(c)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::symplin::projector_frames;

/// Least-squares fit of `u·π(c+u) = π₋₁ + π₀u + π₁u² + π₂u³` over the
/// given offsets. Returns `π₀` and the largest relative fit residual (zero
/// up to rounding when exactly four offsets are given).
pub fn laurent_free_term(offsets: &[f64], projectors: &[DMatrix<f64>]) -> Result<(DMatrix<f64>, f64)> {
    if offsets.len() != projectors.len() || offsets.len() < 4 {
        return Err(Error::LaurentFit(format!(
            "need at least four samples, got {} offsets and {} projectors",
            offsets.len(),
            projectors.len()
        )));
    }
    if offsets.iter().any(|&u| u == 0.0) {
        return Err(Error::LaurentFit("offset zero is the pole".into()));
    }
    let m = offsets.len();
    let vander = DMatrix::from_fn(m, 4, |i, k| offsets[i].powi(k as i32));
    let normal = vander.transpose() * &vander;
    let pinv = linalg::inverse(&normal)
        .ok_or_else(|| Error::LaurentFit("offsets do not determine the coefficients".into()))?
        * vander.transpose();
    let (r, c) = projectors[0].shape();
    let mut coeffs = vec![DMatrix::zeros(r, c); 4];
    for (k, coeff) in coeffs.iter_mut().enumerate() {
        for (i, p) in projectors.iter().enumerate() {
            *coeff += p * (offsets[i] * pinv[(k, i)]);
        }
    }
    let mut residual = 0.0f64;
    for (i, p) in projectors.iter().enumerate() {
        let lhs = p * offsets[i];
        let mut fit = DMatrix::zeros(r, c);
        for (k, coeff) in coeffs.iter().enumerate() {
            fit += coeff * offsets[i].powi(k as i32);
        }
        residual = residual.max((&lhs - fit).norm() / lhs.norm().max(1e-300));
    }
    Ok((coeffs.swap_remove(1), residual))
}

/// Derivative element at the center of five graph samples.
#[derive(Debug, Clone)]
pub struct DerivativeElement {
    pub s_circ: DMatrix<f64>,
    pub projector_defect: f64,
    /// Inverse condition number of the `x`-block of `J°` in the chart.
    pub graph_condition: f64,
}

fn graph_frame(s: &DMatrix<f64>) -> DMatrix<f64> {
    let k = s.nrows();
    let mut f = DMatrix::zeros(2 * k, k);
    f.view_mut((0, 0), (k, k)).fill_with_identity();
    f.view_mut((k, 0), (k, k)).copy_from(s);
    f
}

/// `S°` at the center of `window = [S(c−2h), S(c−h), S(c), S(c+h), S(c+2h)]`.
pub fn derivative_element(window: &[DMatrix<f64>], h: f64) -> Result<DerivativeElement> {
    if window.len() != 5 {
        return Err(Error::LaurentFit(format!("expected five samples, got {}", window.len())));
    }
    let k = window[2].nrows();
    let center = graph_frame(&window[2]);
    let offsets = [-2.0 * h, -h, h, 2.0 * h];
    let mut projectors = Vec::with_capacity(4);
    for idx in [0, 1, 3, 4] {
        projectors.push(projector_frames(&graph_frame(&window[idx]), &center)?);
    }
    let (pi0, _) = laurent_free_term(&offsets, &projectors)?;
    let scale = pi0.norm().powi(2).max(1.0);
    let projector_defect = (&pi0 * &pi0 - &pi0).norm() / scale;
    let range = linalg::orthonormal_columns(&pi0, k, 1e-10)
        .map_err(|_| Error::LaurentFit("free coefficient has deficient range".into()))?;
    let x = range.rows(0, k).into_owned();
    let y = range.rows(k, k).into_owned();
    let graph_condition = linalg::inverse_condition(&x);
    if graph_condition < 1e-10 {
        return Err(Error::GraphUndefined { condition: graph_condition });
    }
    let xi = linalg::inverse(&x).ok_or(Error::GraphUndefined { condition: graph_condition })?;
    Ok(DerivativeElement { s_circ: linalg::symmetrize(&(y * xi)), projector_defect, graph_condition })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Free term by symmetric averaging: odd powers cancel in
    /// `(π(c+jh) + π(c−jh))/2 = π₀ + j²h²π₂`.
    fn averaged(p: &[DMatrix<f64>]) -> DMatrix<f64> {
        let avg1 = (&p[1] + &p[2]) * 0.5;
        let avg2 = (&p[0] + &p[3]) * 0.5;
        (avg1 * 4.0 - avg2) / 3.0
    }

    #[test]
    fn fit_agrees_with_symmetric_averages() {
        let h = 0.1;
        let offsets = [-2.0 * h, -h, h, 2.0 * h];
        let base = [
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 0.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.2, 0.1]),
            DMatrix::from_row_slice(2, 2, &[0.7, 0.7, -0.4, 1.0]),
        ];
        let ps: Vec<DMatrix<f64>> = offsets
            .iter()
            .map(|&u| &base[0] / u + &base[1] + &base[2] * u + &base[3] * (u * u))
            .collect();
        let (pi0, res) = laurent_free_term(&offsets, &ps).unwrap();
        assert_relative_eq!(pi0, base[1], epsilon = 1e-10);
        assert_relative_eq!(pi0, averaged(&ps), epsilon = 1e-10);
        assert!(res < 1e-12);
    }

    #[test]
    fn scalar_derivative_element_matches_series_formula() {
        // S(t) = t + t² + t³: S° = S − 2 Ṡ²/S̈ at t = 0 is −1, up to O(h²).
        let s = |t: f64| DMatrix::from_element(1, 1, t + t * t + t * t * t);
        for h in [1e-2, 5e-3] {
            let w: Vec<_> = (-2..=2).map(|m| s(m as f64 * h)).collect();
            let d = derivative_element(&w, h).unwrap();
            assert!((d.s_circ[(0, 0)] + 1.0).abs() < 20.0 * h * h, "h = {h}: {}", d.s_circ[(0, 0)]);
            assert!(d.projector_defect < 1e-2);
        }
    }

    #[test]
    fn too_few_samples() {
        assert!(laurent_free_term(&[1.0, 2.0], &[DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)]).is_err());
    }
}
