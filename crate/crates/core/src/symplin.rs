//! Symplectic linear algebra on `ℝ²ⁿ` with coordinates `(p, q)`.
//!
//! Convention: `σ((p,q),(p',q')) = ⟨p,q'⟩ − ⟨p',q⟩`. The stored `form` is
//! `J = [[0, −I], [I, 0]]`, which is also the matrix sending `∇h` to the
//! Hamiltonian field, and `σ(v, w) = vᵀ Jᵀ w`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::systems::{HamiltonianSystem, PhasePoint};

/// Relative cut used for transversality and rank decisions.
pub const TRANSVERSALITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpace {
    n: usize,
    form: DMatrix<f64>,
}

/// The standard space of dimension `2n`.
///
/// # Panics
/// If `n == 0`.
pub fn standard_form(n: usize) -> SymplecticSpace {
    assert!(n >= 1, "symplectic space needs n >= 1");
    let mut form = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        form[(i, n + i)] = -1.0;
        form[(n + i, i)] = 1.0;
    }
    SymplecticSpace { n, form }
}

impl SymplecticSpace {
    /// A space with an arbitrary constant form (antisymmetric, invertible).
    pub fn with_form(form: DMatrix<f64>) -> Result<Self> {
        let d = form.nrows();
        if d == 0 || d % 2 != 0 || form.ncols() != d {
            return Err(Error::InvalidInput(format!("form must be square of even size, got {}x{}", d, form.ncols())));
        }
        let scale = form.norm();
        if (&form + form.transpose()).norm() > 1e-12 * scale {
            return Err(Error::InvalidInput("form is not antisymmetric".into()));
        }
        if linalg::inverse_condition(&form) < 1e-12 {
            return Err(Error::InvalidInput("form is degenerate".into()));
        }
        Ok(Self { n: d / 2, form })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn form(&self) -> &DMatrix<f64> {
        &self.form
    }

    pub fn sigma(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        -(v.transpose() * &self.form * w)[(0, 0)]
    }

    /// `σ(aᵢ, bⱼ)` for all column pairs.
    pub fn sigma_matrix(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        -(a.transpose() * &self.form * b)
    }

    /// Largest `|σ|` between columns of an orthonormalized copy of `frame`.
    pub fn isotropy_defect(&self, frame: &DMatrix<f64>) -> Result<f64> {
        let q = linalg::orthonormal_columns(frame, frame.ncols(), TRANSVERSALITY_TOL)?;
        Ok(self.sigma_matrix(&q, &q).amax() / self.form.amax())
    }
}

/// A Lagrangian (or, inside a reduced space, isotropic) subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianSubspace {
    frame: DMatrix<f64>,
    graph_coord: Option<DMatrix<f64>>,
}

impl LagrangianSubspace {
    /// Orthonormalizes `frame` and checks isotropy at `tol`.
    pub fn new(space: &SymplecticSpace, frame: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if frame.nrows() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: frame.nrows() });
        }
        if frame.ncols() > space.n() {
            return Err(Error::InvalidInput(format!(
                "isotropic subspaces have dimension at most {}, got {}",
                space.n(),
                frame.ncols()
            )));
        }
        let q = linalg::orthonormal_columns(frame, frame.ncols(), TRANSVERSALITY_TOL)?;
        let defect = space.sigma_matrix(&q, &q).amax() / space.form().amax();
        if defect > tol {
            return Err(Error::NotLagrangian { defect });
        }
        Ok(Self { frame: q, graph_coord: None })
    }

    /// Coordinate subspace spanned by the momentum axes (vertical fibres).
    pub fn vertical(space: &SymplecticSpace) -> Self {
        let n = space.n();
        let mut frame = DMatrix::zeros(2 * n, n);
        frame.view_mut((0, 0), (n, n)).fill_with_identity();
        Self { frame, graph_coord: None }
    }

    /// Records a symmetric graph coordinate relative to some splitting.
    pub fn with_graph_coord(mut self, s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.dim() || s.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: s.nrows() });
        }
        let scale = s.norm().max(1.0);
        if linalg::asym_norm(&s) > 1e-8 * scale {
            return Err(Error::InvalidInput("graph coordinate is not symmetric".into()));
        }
        self.graph_coord = Some(linalg::symmetrize(&s));
        Ok(self)
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn graph_coord(&self) -> Option<&DMatrix<f64>> {
        self.graph_coord.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.frame.ncols()
    }
}

/// Whether `frame` spans a Lagrangian subspace: `n` independent columns on
/// which `σ` vanishes within `tol`. The test is on an orthonormalized copy,
/// so it does not depend on the choice of basis.
pub fn is_lagrangian(space: &SymplecticSpace, frame: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if frame.nrows() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: frame.nrows() });
    }
    let r = linalg::rank(frame, TRANSVERSALITY_TOL);
    if r < frame.ncols() {
        return Err(Error::RankDeficient { rank: r, expected: frame.ncols() });
    }
    if frame.ncols() != space.n() {
        return Ok(false);
    }
    Ok(space.isotropy_defect(frame)? <= tol)
}

/// Projector onto `span(onto)` along `span(parallel)`; the two spans must
/// be complementary.
pub fn projector_frames(onto: &DMatrix<f64>, parallel: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let dim = onto.nrows();
    let k = onto.ncols();
    if parallel.nrows() != dim || k + parallel.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: k + parallel.ncols() });
    }
    let a = linalg::orthonormal_columns(onto, k, TRANSVERSALITY_TOL)?;
    let b = linalg::orthonormal_columns(parallel, parallel.ncols(), TRANSVERSALITY_TOL)?;
    let mut stacked = DMatrix::zeros(dim, dim);
    stacked.view_mut((0, 0), (dim, k)).copy_from(&a);
    stacked.view_mut((0, k), (dim, dim - k)).copy_from(&b);
    let r = linalg::rank(&stacked, TRANSVERSALITY_TOL);
    if r < dim {
        return Err(Error::NotTransversal { defect: dim - r });
    }
    let inv = linalg::inverse(&stacked).ok_or(Error::NotTransversal { defect: 1 })?;
    Ok(&a * inv.rows(0, k))
}

/// `π` onto `onto` parallel to `parallel`.
pub fn projector(
    _space: &SymplecticSpace,
    onto: &LagrangianSubspace,
    parallel: &LagrangianSubspace,
) -> Result<DMatrix<f64>> {
    projector_frames(onto.frame(), parallel.frame())
}

/// Completes an isotropic frame `E` (`2n × k`) to a symplectic family
/// `[E | F]` with `σ(eᵢ, fⱼ) = δᵢⱼ` and `σ(fᵢ, fⱼ) = 0`. For `k = n` this is a
/// Darboux basis: `Bᵀ·form·B` equals the standard form.
pub fn darboux_complete(space: &SymplecticSpace, basis: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = basis.ncols();
    if basis.nrows() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: basis.nrows() });
    }
    let defect = space.isotropy_defect(basis)?;
    if defect > 1e-10 {
        return Err(Error::NotLagrangian { defect });
    }
    // σ(E, F) = M F with M = −Eᵀ·form; least-norm solution of M F̃ = I.
    let m = -(basis.transpose() * space.form());
    let gram = &m * m.transpose();
    let gi = linalg::inverse(&gram).ok_or(Error::RankDeficient { rank: linalg::rank(basis, 1e-12), expected: k })?;
    let f_tilde = m.transpose() * gi;
    let s = space.sigma_matrix(&f_tilde, &f_tilde);
    let f = &f_tilde + basis * (s * 0.5);
    let mut out = DMatrix::zeros(space.dim(), 2 * k);
    out.view_mut((0, 0), (space.dim(), k)).copy_from(basis);
    out.view_mut((0, k), (space.dim(), k)).copy_from(&f);
    Ok(out)
}

/// A symmetric bilinear form with its inertia.
#[derive(Debug, Clone, PartialEq)]
pub struct GramForm {
    pub matrix: DMatrix<f64>,
    /// `(n_plus, n_minus, n_zero)`.
    pub signature: (usize, usize, usize),
}

impl GramForm {
    /// Eigenvalues with `|λ| ≤ 1e-10 · max|λ|` count as zero.
    pub fn new(matrix: DMatrix<f64>) -> Self {
        let matrix = linalg::symmetrize(&matrix);
        let (vals, _) = linalg::sym_eigen(&matrix);
        let scale = vals.amax();
        let tol = 1e-10 * scale;
        let mut sig = (0, 0, 0);
        for &v in vals.iter() {
            if scale == 0.0 || v.abs() <= tol {
                sig.2 += 1;
            } else if v > 0.0 {
                sig.0 += 1;
            } else {
                sig.1 += 1;
            }
        }
        Self { matrix, signature: sig }
    }

    pub fn is_regular(&self) -> bool {
        self.signature.2 == 0
    }

    pub fn is_definite(&self) -> bool {
        self.is_regular() && (self.signature.0 == 0 || self.signature.1 == 0)
    }

    /// `+1` for positive definite, `−1` for negative definite.
    pub fn sign(&self) -> Option<f64> {
        if !self.is_definite() {
            None
        } else if self.signature.1 == 0 {
            Some(1.0)
        } else {
            Some(-1.0)
        }
    }
}

/// `g(X, Y) = σ([ẍh, X], Y)` on the columns of `frame`, with the frame
/// extended constantly in the chart so that `[ẍh, X] = −(Dẍh)·X`.
pub fn gram_gh(system: &HamiltonianSystem, z: &PhasePoint, frame: &DMatrix<f64>) -> Result<GramForm> {
    let space = standard_form(system.n());
    let a = system.field_jacobian(z)?;
    let bracket = -(a * frame);
    Ok(GramForm::new(space.sigma_matrix(&bracket, frame)))
}
