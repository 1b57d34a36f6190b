//! Riemannian metrics on two-dimensional charts.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DVector, Matrix2, Vector2};

use super::potential::ScalarField;
use super::Topology;
use crate::error::{Error, Result};

/// Christoffel symbols `Γ[i][j][k] = Γ^i_{jk}`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

/// A metric `g(q)` with first and second derivatives.
///
/// `dg(q)[a] = ∂g/∂q_a`, `d2g(q)[a][b] = ∂²g/∂q_a∂q_b`.
pub trait Metric2D: Send + Sync + Debug {
    fn g(&self, q: &Vector2<f64>) -> Matrix2<f64>;
    fn dg(&self, q: &Vector2<f64>) -> [Matrix2<f64>; 2];
    fn d2g(&self, q: &Vector2<f64>) -> [[Matrix2<f64>; 2]; 2];

    fn topology(&self) -> [Topology; 2] {
        [Topology::Unbounded; 2]
    }

    /// True when `q ↦ (q − (x₀, 0))/y₀` is an isometry for every base point
    /// (upper half-plane). Long flows use it to keep the chart well scaled.
    fn half_plane_isometries(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

/// Metric matrix and its inverse, failing on non-positive-definite values.
pub fn metric_and_inverse(m: &dyn Metric2D, q: &Vector2<f64>) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    let g = m.g(q);
    let det = g.determinant();
    if !(det.is_finite() && det > 0.0 && g[(0, 0)] > 0.0) {
        return Err(Error::SingularMetric(vec![q[0], q[1]]));
    }
    let inv = g.try_inverse().ok_or_else(|| Error::SingularMetric(vec![q[0], q[1]]))?;
    Ok((g, inv))
}

/// `∂_a g⁻¹` and `∂_a∂_b g⁻¹`.
pub fn inverse_derivatives(
    m: &dyn Metric2D,
    q: &Vector2<f64>,
) -> Result<(Matrix2<f64>, [Matrix2<f64>; 2], [[Matrix2<f64>; 2]; 2])> {
    let (_, gi) = metric_and_inverse(m, q)?;
    let dg = m.dg(q);
    let d2g = m.d2g(q);
    let dgi = [-gi * dg[0] * gi, -gi * dg[1] * gi];
    let mut d2gi = [[Matrix2::zeros(); 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            d2gi[a][b] = gi * (dg[a] * gi * dg[b] + dg[b] * gi * dg[a] - d2g[a][b]) * gi;
        }
    }
    Ok((gi, dgi, d2gi))
}

pub fn christoffel(m: &dyn Metric2D, q: &Vector2<f64>) -> Result<Christoffel> {
    let (_, gi) = metric_and_inverse(m, q)?;
    let dg = m.dg(q);
    let mut out = [[[0.0; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                let mut s = 0.0;
                for l in 0..2 {
                    s += gi[(i, l)] * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)]);
                }
                out[i][j][k] = 0.5 * s;
            }
        }
    }
    Ok(out)
}

/// `∂_e Γ^i_{jk}` indexed `[e][i][j][k]`.
fn christoffel_derivatives(m: &dyn Metric2D, q: &Vector2<f64>) -> Result<[Christoffel; 2]> {
    let (gi, dgi, _) = inverse_derivatives(m, q)?;
    let dg = m.dg(q);
    let d2g = m.d2g(q);
    let mut out = [[[[0.0; 2]; 2]; 2]; 2];
    for e in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        let first = dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)];
                        let second = d2g[e][j][(l, k)] + d2g[e][k][(l, j)] - d2g[e][l][(j, k)];
                        s += dgi[e][(i, l)] * first + gi[(i, l)] * second;
                    }
                    out[e][i][j][k] = 0.5 * s;
                }
            }
        }
    }
    Ok(out)
}

/// Gauss curvature from the Riemann tensor, `K = R_{1212} / det g`.
pub fn gauss_curvature(m: &dyn Metric2D, q: &Vector2<f64>) -> Result<f64> {
    let (g, _) = metric_and_inverse(m, q)?;
    let gam = christoffel(m, q)?;
    let dgam = christoffel_derivatives(m, q)?;
    // R^a_{bcd} = ∂_c Γ^a_{db} − ∂_d Γ^a_{cb} + Γ^a_{ce} Γ^e_{db} − Γ^a_{de} Γ^e_{cb}
    let riemann_up = |a: usize, b: usize, c: usize, d: usize| {
        let mut r = dgam[c][a][d][b] - dgam[d][a][c][b];
        for e in 0..2 {
            r += gam[a][c][e] * gam[e][d][b] - gam[a][d][e] * gam[e][c][b];
        }
        r
    };
    let r1212: f64 = (0..2).map(|a| g[(0, a)] * riemann_up(a, 1, 0, 1)).sum();
    Ok(r1212 / g.determinant())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EuclideanMetric;

impl Metric2D for EuclideanMetric {
    fn g(&self, _q: &Vector2<f64>) -> Matrix2<f64> {
        Matrix2::identity()
    }
    fn dg(&self, _q: &Vector2<f64>) -> [Matrix2<f64>; 2] {
        [Matrix2::zeros(); 2]
    }
    fn d2g(&self, _q: &Vector2<f64>) -> [[Matrix2<f64>; 2]; 2] {
        [[Matrix2::zeros(); 2]; 2]
    }
    fn name(&self) -> &str {
        "euclidean"
    }
}

/// Flat metric on a torus `ℝ²/(L₁ℤ × L₂ℤ)`.
#[derive(Debug, Clone, Copy)]
pub struct FlatTorusMetric {
    pub periods: [f64; 2],
}

impl Metric2D for FlatTorusMetric {
    fn g(&self, _q: &Vector2<f64>) -> Matrix2<f64> {
        Matrix2::identity()
    }
    fn dg(&self, _q: &Vector2<f64>) -> [Matrix2<f64>; 2] {
        [Matrix2::zeros(); 2]
    }
    fn d2g(&self, _q: &Vector2<f64>) -> [[Matrix2<f64>; 2]; 2] {
        [[Matrix2::zeros(); 2]; 2]
    }
    fn topology(&self) -> [Topology; 2] {
        [Topology::Periodic(self.periods[0]), Topology::Periodic(self.periods[1])]
    }
    fn name(&self) -> &str {
        "flat_torus"
    }
}

/// Upper half-plane `y > 0` with `g = y⁻² I`, curvature −1.
#[derive(Debug, Clone, Copy, Default)]
pub struct HyperbolicHalfPlane;

impl Metric2D for HyperbolicHalfPlane {
    fn g(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        Matrix2::identity() / (q[1] * q[1])
    }
    fn dg(&self, q: &Vector2<f64>) -> [Matrix2<f64>; 2] {
        [Matrix2::zeros(), Matrix2::identity() * (-2.0 / q[1].powi(3))]
    }
    fn d2g(&self, q: &Vector2<f64>) -> [[Matrix2<f64>; 2]; 2] {
        let z = Matrix2::zeros();
        [[z, z], [z, Matrix2::identity() * (6.0 / q[1].powi(4))]]
    }
    fn half_plane_isometries(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "hyperbolic_half_plane"
    }
}

/// Round unit sphere in `(θ, φ)` coordinates, `g = diag(1, sin²θ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RoundSphere;

impl Metric2D for RoundSphere {
    fn g(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        let s = q[0].sin();
        Matrix2::new(1.0, 0.0, 0.0, s * s)
    }
    fn dg(&self, q: &Vector2<f64>) -> [Matrix2<f64>; 2] {
        [Matrix2::new(0.0, 0.0, 0.0, (2.0 * q[0]).sin()), Matrix2::zeros()]
    }
    fn d2g(&self, q: &Vector2<f64>) -> [[Matrix2<f64>; 2]; 2] {
        let z = Matrix2::zeros();
        [[Matrix2::new(0.0, 0.0, 0.0, 2.0 * (2.0 * q[0]).cos()), z], [z, z]]
    }
    fn topology(&self) -> [Topology; 2] {
        [Topology::Unbounded, Topology::Periodic(std::f64::consts::TAU)]
    }
    fn name(&self) -> &str {
        "round_sphere"
    }
}

/// Conformal metric `λ(q) I`.
#[derive(Debug, Clone)]
pub struct ConformalMetric {
    pub factor: Arc<dyn ScalarField>,
    pub topology: [Topology; 2],
}

impl ConformalMetric {
    fn dv(q: &Vector2<f64>) -> DVector<f64> {
        DVector::from_column_slice(q.as_slice())
    }
}

impl Metric2D for ConformalMetric {
    fn g(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        Matrix2::identity() * self.factor.value(&Self::dv(q))
    }
    fn dg(&self, q: &Vector2<f64>) -> [Matrix2<f64>; 2] {
        let d = self.factor.gradient(&Self::dv(q));
        [Matrix2::identity() * d[0], Matrix2::identity() * d[1]]
    }
    fn d2g(&self, q: &Vector2<f64>) -> [[Matrix2<f64>; 2]; 2] {
        let h = self.factor.hessian(&Self::dv(q));
        let i = Matrix2::identity();
        [[i * h[(0, 0)], i * h[(0, 1)]], [i * h[(1, 0)], i * h[(1, 1)]]]
    }
    fn topology(&self) -> [Topology; 2] {
        self.topology
    }
    fn name(&self) -> &str {
        "conformal"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::potential::{Monomial, PolynomialPotential};
    use approx::assert_relative_eq;

    #[test]
    fn constant_curvature_charts() {
        let q = Vector2::new(0.3, 1.7);
        assert_relative_eq!(gauss_curvature(&HyperbolicHalfPlane, &q).unwrap(), -1.0, epsilon = 1e-12);
        assert_relative_eq!(gauss_curvature(&RoundSphere, &Vector2::new(1.1, 0.4)).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(gauss_curvature(&EuclideanMetric, &q).unwrap(), 0.0);
    }

    #[test]
    fn conformal_curvature_matches_laplacian_formula() {
        // K = −Δ(log λ) / (2λ); for λ = 1 + x² + y², log-Laplacian is 4/λ².
        let factor = PolynomialPotential {
            n: 2,
            terms: vec![
                Monomial { coef: 1.0, powers: vec![0, 0] },
                Monomial { coef: 1.0, powers: vec![2, 0] },
                Monomial { coef: 1.0, powers: vec![0, 2] },
            ],
        };
        let m = ConformalMetric { factor: Arc::new(factor), topology: [Topology::Unbounded; 2] };
        let q = Vector2::new(0.4, -0.9);
        let lam: f64 = 1.0 + q.norm_squared();
        let expected = -(4.0 / (lam * lam)) / (2.0 * lam);
        assert_relative_eq!(gauss_curvature(&m, &q).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn singular_metric_is_reported() {
        assert!(matches!(
            metric_and_inverse(&HyperbolicHalfPlane, &Vector2::new(0.0, 0.0)),
            Err(Error::SingularMetric(_))
        ));
        assert!(metric_and_inverse(&RoundSphere, &Vector2::new(0.0, 1.0)).is_err());
    }
}
