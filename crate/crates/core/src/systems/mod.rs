//! Hamiltonian systems on `ℝ²ⁿ` (or torus) charts with coordinates `(p, q)`.
//!
//! Phase vectors are stored momenta first: `z = (p₁..pₙ, q₁..qₙ)`.

pub mod metric;
pub mod potential;
pub mod sampler;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
pub use metric::{
    christoffel, gauss_curvature, ConformalMetric, EuclideanMetric, FlatTorusMetric, HyperbolicHalfPlane, Metric2D,
    RoundSphere,
};
pub use potential::{CosinePotential, CosineTerm, Monomial, PolynomialPotential, ScalarField, SumField, ZeroPotential};
pub use sampler::{liouville_sample, LevelSet};

/// Per-coordinate topology of the configuration chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    Unbounded,
    Periodic(f64),
}

impl Topology {
    pub fn wrap(self, x: f64) -> f64 {
        match self {
            Topology::Unbounded => x,
            Topology::Periodic(l) => {
                let r = x.rem_euclid(l);
                // rem_euclid can round up to exactly l for tiny negative x.
                if r >= l {
                    0.0
                } else {
                    r
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Mechanical,
    Geodesic2d,
    MechanicalOnMetric,
    Custom,
}

/// A point `z = (p, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
}

impl PhasePoint {
    pub fn new(p: DVector<f64>, q: DVector<f64>) -> Self {
        assert_eq!(p.len(), q.len(), "p and q must have equal length");
        Self { p, q }
    }

    pub fn from_slices(p: &[f64], q: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(p), DVector::from_column_slice(q))
    }

    /// Splits a `2n`-vector `(p, q)`.
    pub fn from_vector(z: &DVector<f64>) -> Self {
        let n = z.len() / 2;
        Self {
            p: z.rows(0, n).into_owned(),
            q: z.rows(n, n).into_owned(),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let n = self.n();
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.p);
        z.rows_mut(n, n).copy_from(&self.q);
        z
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().chain(self.q.iter()).all(|x| x.is_finite())
    }
}

type EnergyFn = dyn Fn(&PhasePoint) -> f64 + Send + Sync;
type GradFn = dyn Fn(&PhasePoint) -> DVector<f64> + Send + Sync;
type HessFn = dyn Fn(&PhasePoint) -> DMatrix<f64> + Send + Sync;

/// User-supplied `h`, `∇h`, `Hess h` (all in `(p, q)` order).
#[derive(Clone)]
pub struct CustomHamiltonian {
    pub h: Arc<EnergyFn>,
    pub grad: Arc<GradFn>,
    pub hess: Arc<HessFn>,
}

#[derive(Clone)]
enum Kind {
    Mechanical(Arc<dyn ScalarField>),
    Geodesic(Arc<dyn Metric2D>),
    OnMetric(Arc<dyn Metric2D>, Arc<dyn ScalarField>),
    Custom(CustomHamiltonian),
}

/// A Hamiltonian `h` with analytic gradient and Hessian.
#[derive(Clone)]
pub struct HamiltonianSystem {
    n: usize,
    kind: Kind,
    topology: Vec<Topology>,
}

impl fmt::Debug for HamiltonianSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Mechanical(u) => format!("mechanical({u:?})"),
            Kind::Geodesic(m) => format!("geodesic2d({})", m.name()),
            Kind::OnMetric(m, u) => format!("mechanical_on_metric({}, {u:?})", m.name()),
            Kind::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("HamiltonianSystem")
            .field("n", &self.n)
            .field("kind", &kind)
            .field("topology", &self.topology)
            .finish()
    }
}

/// Value of the Hamiltonian vector field together with a critical-point flag.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldValue {
    pub vector: DVector<f64>,
    pub critical: bool,
}

/// Gradients smaller than this (relative to `1 + |z|`) mark a critical point.
pub const CRITICAL_TOL: f64 = 1e-12;

/// `h = ½|p|² + U(q)`.
pub fn mechanical(u: Arc<dyn ScalarField>, topology: Vec<Topology>) -> Result<HamiltonianSystem> {
    let n = u.dim();
    if n == 0 || topology.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: topology.len() });
    }
    Ok(HamiltonianSystem { n, kind: Kind::Mechanical(u), topology })
}

/// `h = ½ pᵀ g(q)⁻¹ p`.
pub fn geodesic2d(metric: Arc<dyn Metric2D>) -> HamiltonianSystem {
    let topology = metric.topology().to_vec();
    HamiltonianSystem { n: 2, kind: Kind::Geodesic(metric), topology }
}

/// `h = ½ pᵀ g(q)⁻¹ p + U(q)`.
pub fn mechanical_on_metric(metric: Arc<dyn Metric2D>, u: Arc<dyn ScalarField>) -> Result<HamiltonianSystem> {
    if u.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: u.dim() });
    }
    let topology = metric.topology().to_vec();
    Ok(HamiltonianSystem { n: 2, kind: Kind::OnMetric(metric, u), topology })
}

/// Arbitrary `h` from callbacks.
pub fn custom(n: usize, callbacks: CustomHamiltonian, topology: Vec<Topology>) -> Result<HamiltonianSystem> {
    if n == 0 || topology.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: topology.len() });
    }
    Ok(HamiltonianSystem { n, kind: Kind::Custom(callbacks), topology })
}

/// Field value `ẍh(z) = (−∂h/∂q, ∂h/∂p)`, so that `σ(v, ẍh) = ⟨dh, v⟩`.
pub fn hamiltonian_vf(system: &HamiltonianSystem, z: &PhasePoint) -> Result<FieldValue> {
    let g = system.gradient(z)?;
    let vector = system.field_from_gradient(&g);
    let critical = g.norm() <= CRITICAL_TOL * (1.0 + z.to_vector().norm());
    Ok(FieldValue { vector, critical })
}

fn v2(x: &DVector<f64>) -> Vector2<f64> {
    Vector2::new(x[0], x[1])
}

impl HamiltonianSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> FamilyTag {
        match self.kind {
            Kind::Mechanical(_) => FamilyTag::Mechanical,
            Kind::Geodesic(_) => FamilyTag::Geodesic2d,
            Kind::OnMetric(..) => FamilyTag::MechanicalOnMetric,
            Kind::Custom(_) => FamilyTag::Custom,
        }
    }

    pub fn topology(&self) -> &[Topology] {
        &self.topology
    }

    /// Replaces the per-coordinate topology (e.g. a mechanical system on a torus).
    pub fn with_topology(mut self, topology: Vec<Topology>) -> Result<Self> {
        if topology.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: topology.len() });
        }
        self.topology = topology;
        Ok(self)
    }

    pub fn potential(&self) -> Option<&Arc<dyn ScalarField>> {
        match &self.kind {
            Kind::Mechanical(u) | Kind::OnMetric(_, u) => Some(u),
            _ => None,
        }
    }

    pub fn metric(&self) -> Option<&Arc<dyn Metric2D>> {
        match &self.kind {
            Kind::Geodesic(m) | Kind::OnMetric(m, _) => Some(m),
            _ => None,
        }
    }

    /// Separable `½|p|² + U(q)` (Störmer–Verlet applies).
    pub fn is_separable(&self) -> bool {
        matches!(self.kind, Kind::Mechanical(_))
    }

    /// Potential energy for families with a kinetic/potential split.
    pub fn potential_value(&self, q: &DVector<f64>) -> Option<f64> {
        match &self.kind {
            Kind::Mechanical(u) | Kind::OnMetric(_, u) => Some(u.value(q)),
            Kind::Geodesic(_) => Some(0.0),
            Kind::Custom(_) => None,
        }
    }

    fn check_dim(&self, z: &PhasePoint) -> Result<()> {
        if z.n() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: z.n() });
        }
        Ok(())
    }

    pub fn energy(&self, z: &PhasePoint) -> Result<f64> {
        self.check_dim(z)?;
        let e = match &self.kind {
            Kind::Mechanical(u) => 0.5 * z.p.norm_squared() + u.value(&z.q),
            Kind::Geodesic(m) => {
                let (_, gi) = metric::metric_and_inverse(m.as_ref(), &v2(&z.q))?;
                let p = v2(&z.p);
                0.5 * p.dot(&(gi * p))
            }
            Kind::OnMetric(m, u) => {
                let (_, gi) = metric::metric_and_inverse(m.as_ref(), &v2(&z.q))?;
                let p = v2(&z.p);
                0.5 * p.dot(&(gi * p)) + u.value(&z.q)
            }
            Kind::Custom(c) => (c.h)(z),
        };
        if !e.is_finite() {
            return Err(Error::NonFinite("energy"));
        }
        Ok(e)
    }

    /// `∇h = (∂h/∂p, ∂h/∂q)`.
    pub fn gradient(&self, z: &PhasePoint) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        let n = self.n;
        let g = match &self.kind {
            Kind::Mechanical(u) => {
                let mut g = DVector::zeros(2 * n);
                g.rows_mut(0, n).copy_from(&z.p);
                g.rows_mut(n, n).copy_from(&u.gradient(&z.q));
                g
            }
            Kind::Geodesic(m) => self.metric_gradient(m.as_ref(), None, z)?,
            Kind::OnMetric(m, u) => self.metric_gradient(m.as_ref(), Some(u.as_ref()), z)?,
            Kind::Custom(c) => {
                let g = (c.grad)(z);
                if g.len() != 2 * n {
                    return Err(Error::DimensionMismatch { expected: 2 * n, got: g.len() });
                }
                g
            }
        };
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        Ok(g)
    }

    /// `Hess h` in `(p, q)` block order.
    pub fn hessian(&self, z: &PhasePoint) -> Result<DMatrix<f64>> {
        self.check_dim(z)?;
        let n = self.n;
        let h = match &self.kind {
            Kind::Mechanical(u) => {
                let mut h = DMatrix::zeros(2 * n, 2 * n);
                h.view_mut((0, 0), (n, n)).fill_with_identity();
                h.view_mut((n, n), (n, n)).copy_from(&u.hessian(&z.q));
                h
            }
            Kind::Geodesic(m) => self.metric_hessian(m.as_ref(), None, z)?,
            Kind::OnMetric(m, u) => self.metric_hessian(m.as_ref(), Some(u.as_ref()), z)?,
            Kind::Custom(c) => {
                let h = (c.hess)(z);
                if h.nrows() != 2 * n || h.ncols() != 2 * n {
                    return Err(Error::DimensionMismatch { expected: 2 * n, got: h.nrows() });
                }
                h
            }
        };
        if h.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("hessian"));
        }
        Ok(h)
    }

    fn metric_gradient(&self, m: &dyn Metric2D, u: Option<&dyn ScalarField>, z: &PhasePoint) -> Result<DVector<f64>> {
        let q = v2(&z.q);
        let p = v2(&z.p);
        let (gi, dgi, _) = metric::inverse_derivatives(m, &q)?;
        let hp = gi * p;
        let mut hq = Vector2::new(0.5 * p.dot(&(dgi[0] * p)), 0.5 * p.dot(&(dgi[1] * p)));
        if let Some(u) = u {
            hq += v2(&u.gradient(&z.q));
        }
        Ok(DVector::from_vec(vec![hp[0], hp[1], hq[0], hq[1]]))
    }

    fn metric_hessian(&self, m: &dyn Metric2D, u: Option<&dyn ScalarField>, z: &PhasePoint) -> Result<DMatrix<f64>> {
        let q = v2(&z.q);
        let p = v2(&z.p);
        let (gi, dgi, d2gi) = metric::inverse_derivatives(m, &q)?;
        let mut hqq = Matrix2::zeros();
        for a in 0..2 {
            for b in 0..2 {
                hqq[(a, b)] = 0.5 * p.dot(&(d2gi[a][b] * p));
            }
        }
        if let Some(u) = u {
            let uh = u.hessian(&z.q);
            hqq += Matrix2::new(uh[(0, 0)], uh[(0, 1)], uh[(1, 0)], uh[(1, 1)]);
        }
        // ∂²h/∂p_i∂q_a = (∂_a g⁻¹ p)_i
        let hpq = Matrix2::from_columns(&[dgi[0] * p, dgi[1] * p]);
        let mut h = DMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                h[(i, j)] = gi[(i, j)];
                h[(i, 2 + j)] = hpq[(i, j)];
                h[(2 + j, i)] = hpq[(i, j)];
                h[(2 + i, 2 + j)] = hqq[(i, j)];
            }
        }
        Ok(linalg::symmetrize(&h))
    }

    /// `J ∇h` with `J = [[0, −I], [I, 0]]`.
    pub fn field_from_gradient(&self, g: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut v = DVector::zeros(2 * n);
        for i in 0..n {
            v[i] = -g[n + i];
            v[n + i] = g[i];
        }
        v
    }

    /// Linearization `D(ẍh) = J · Hess h`.
    pub fn field_jacobian(&self, z: &PhasePoint) -> Result<DMatrix<f64>> {
        let h = self.hessian(z)?;
        let n = self.n;
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        a.view_mut((0, 0), (n, 2 * n)).copy_from(&(-h.view((n, 0), (n, 2 * n))));
        a.view_mut((n, 0), (n, 2 * n)).copy_from(&h.view((0, 0), (n, 2 * n)));
        Ok(a)
    }

    /// Reduces periodic coordinates into `[0, L)`.
    pub fn wrap(&self, z: &mut PhasePoint) {
        for (i, t) in self.topology.iter().enumerate() {
            z.q[i] = t.wrap(z.q[i]);
        }
    }

    /// Linear map `L(z)` whose Gram matrix `LᵀL` is the phase-space metric used
    /// to measure tangent vectors. Identity in Euclidean charts; for metric
    /// families it is the Sasaki metric (horizontal/vertical split through the
    /// Levi-Civita connection), which every isometry of `g` preserves.
    pub fn phase_metric_map(&self, z: &PhasePoint) -> Result<DMatrix<f64>> {
        let n = self.n;
        let m = match &self.kind {
            Kind::Geodesic(m) | Kind::OnMetric(m, _) => m,
            _ => return Ok(DMatrix::identity(2 * n, 2 * n)),
        };
        let q = v2(&z.q);
        let (g, _) = metric::metric_and_inverse(m.as_ref(), &q)?;
        let gam = metric::christoffel(m.as_ref(), &q)?;
        let gm = DMatrix::from_column_slice(2, 2, g.as_slice());
        let sq = linalg::sym_sqrt(&gm);
        let isq = linalg::sym_inv_sqrt_abs(&gm);
        let mut c = DMatrix::zeros(2, 2);
        for k in 0..2 {
            for j in 0..2 {
                c[(k, j)] = (0..2).map(|i| z.p[i] * gam[i][k][j]).sum();
            }
        }
        let mut l = DMatrix::zeros(4, 4);
        l.view_mut((0, 0), (2, 2)).copy_from(&isq);
        l.view_mut((0, 2), (2, 2)).copy_from(&(-&isq * &c));
        l.view_mut((2, 2), (2, 2)).copy_from(&sq);
        Ok(l)
    }

    /// For charts with a transitive isometry group (upper half-plane), moves a
    /// point that has drifted out of the well-scaled region back to the base
    /// point `(0, 1)`. Returns the new point and the (symplectic) linear map
    /// applied to tangent vectors, or `None` when no move is needed.
    pub fn recenter(&self, z: &PhasePoint) -> Option<(PhasePoint, DMatrix<f64>)> {
        let m = match &self.kind {
            Kind::Geodesic(m) => m,
            _ => return None,
        };
        if !m.half_plane_isometries() {
            return None;
        }
        let (x, y) = (z.q[0], z.q[1]);
        if (0.5..=2.0).contains(&y) && x.abs() <= 2.0 {
            return None;
        }
        let q = DVector::from_vec(vec![0.0, 1.0]);
        let p = &z.p * y;
        let map = DMatrix::from_diagonal(&DVector::from_vec(vec![y, y, 1.0 / y, 1.0 / y]));
        Some((PhasePoint { p, q }, map))
    }
}

/// Largest relative discrepancy between analytic derivatives and central
/// differences of `h` at `z` (step scaled by `1 + |z_i|`).
pub fn derivative_consistency(system: &HamiltonianSystem, z: &PhasePoint, step: f64) -> Result<f64> {
    let x = z.to_vector();
    let g = system.gradient(z)?;
    let h = system.hessian(z)?;
    let dim = x.len();
    let mut worst = linalg::asym_norm(&h);
    for i in 0..dim {
        let s = step * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += s;
        xm[i] -= s;
        let zp = PhasePoint::from_vector(&xp);
        let zm = PhasePoint::from_vector(&xm);
        let fd = (system.energy(&zp)? - system.energy(&zm)?) / (2.0 * s);
        worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
        let fdg = (system.gradient(&zp)? - system.gradient(&zm)?) / (2.0 * s);
        for j in 0..dim {
            worst = worst.max((fdg[j] - h[(j, i)]).abs() / (1.0 + h[(j, i)].abs()));
        }
    }
    Ok(worst)
}
