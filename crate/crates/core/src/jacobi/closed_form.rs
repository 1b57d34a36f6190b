//! Closed-form curvature for the model families, used as oracles for the
//! numerical pipeline.
//!
//! Reduced operators act on the direction transverse to the motion inside
//! the energy level. In dimension two that direction is one-dimensional, so
//! the operators are `1 × 1`; the unit vector `X` is normalized for the
//! kinetic metric and `g`-orthogonal to the velocity `v = g⁻¹p`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};

use super::{CurvatureKind, CurvatureOperator};
use crate::error::{Error, Result};
use crate::linalg;
use crate::systems::metric::{christoffel, gauss_curvature, metric_and_inverse};
use crate::systems::{HamiltonianSystem, Metric2D, PhasePoint, ScalarField};

/// For `h = ½|p|² + U`: returns `Hess U(q)` and the representative
/// `Hess U + (3/|p|²) ∇U ∇Uᵀ` of the reduced curvature.
pub fn mechanical_closed_form(system: &HamiltonianSystem, z: &PhasePoint) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let u = system
        .potential()
        .filter(|_| system.is_separable())
        .ok_or_else(|| Error::InvalidInput("closed form needs a mechanical system".into()))?;
    let p2 = z.p.norm_squared();
    if p2 == 0.0 {
        return Err(Error::InvalidInput("reduced formula is singular at p = 0".into()));
    }
    let hess = u.hessian(&z.q);
    let g = u.gradient(&z.q);
    let rep = &hess + &g * g.transpose() * (3.0 / p2);
    Ok((hess, rep))
}

/// Matrix of `rep` on an orthonormal basis of `p^⊥`.
pub fn restrict_to_complement(rep: &DMatrix<f64>, p: &DVector<f64>) -> DMatrix<f64> {
    let basis = linalg::null_space(&DMatrix::from_row_slice(1, p.len(), p.as_slice()), 1e-12);
    basis.transpose() * rep * basis
}

/// Unit transverse direction `X` (kinetic-metric unit, orthogonal to `g⁻¹p`).
fn transverse(g: &nalgebra::Matrix2<f64>, p: &Vector2<f64>) -> Result<Vector2<f64>> {
    let x = Vector2::new(-p[1], p[0]);
    let n2 = x.dot(&(g * x));
    if !(n2 > 0.0) {
        return Err(Error::InvalidInput("zero momentum has no transverse direction".into()));
    }
    Ok(x / n2.sqrt())
}

/// `[K(q) · pᵀ g⁻¹ p]`, i.e. `K · 2E` on the level `h = E`.
pub fn geodesic_closed_form(metric: &dyn Metric2D, z: &PhasePoint) -> Result<CurvatureOperator> {
    let q = Vector2::new(z.q[0], z.q[1]);
    let p = Vector2::new(z.p[0], z.p[1]);
    let (_, gi) = metric_and_inverse(metric, &q)?;
    let k = gauss_curvature(metric, &q)?;
    Ok(CurvatureOperator::new(DMatrix::from_element(1, 1, k * p.dot(&(gi * p))), CurvatureKind::Reduced))
}

/// `[K |v|² + Hess_g U(X, X) + 3 ⟨∇U, X⟩² / (2 (h − U))]` for
/// `h = ½ pᵀ g⁻¹ p + U(q)`.
pub fn mechanical_on_metric_closed_form(
    metric: &Arc<dyn Metric2D>,
    u: &Arc<dyn ScalarField>,
    z: &PhasePoint,
) -> Result<CurvatureOperator> {
    let q = Vector2::new(z.q[0], z.q[1]);
    let p = Vector2::new(z.p[0], z.p[1]);
    let (g, gi) = metric_and_inverse(metric.as_ref(), &q)?;
    let kinetic = 0.5 * p.dot(&(gi * p));
    if !(kinetic > 0.0) {
        return Err(Error::InvalidInput("turning point h(z) = U(q): correction term is singular".into()));
    }
    let geo = geodesic_closed_form(metric.as_ref(), z)?.matrix[(0, 0)];
    let x = transverse(&g, &p)?;
    let du = u.gradient(&z.q);
    let ddu = u.hessian(&z.q);
    let gam = christoffel(metric.as_ref(), &q)?;
    let mut cov_hess = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let conn: f64 = (0..2).map(|c| gam[c][a][b] * du[c]).sum();
            cov_hess += x[a] * x[b] * (ddu[(a, b)] - conn);
        }
    }
    let du_x = du[0] * x[0] + du[1] * x[1];
    let value = geo + cov_hess + 3.0 * du_x * du_x / (2.0 * kinetic);
    Ok(CurvatureOperator::new(DMatrix::from_element(1, 1, value), CurvatureKind::Reduced))
}
