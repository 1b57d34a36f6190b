//! Pointwise trace quantities: the bound integrand `Tr √(−R̂)`, the
//! expressions `r` and `r′` built from a Riccati solution, and the trace
//! inequality `Tr[MU + NU⁻¹] ≥ 2 Tr √M √N`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobi::CurvatureOperator;
use crate::linalg;

/// Relative tolerance below which eigenvalues of `−R̂` are treated as zero.
pub const CLAMP_REL_TOL: f64 = 1e-8;
/// Eigenvalues of `V` below this fraction of `‖V‖` span `ker V`.
pub const KERNEL_REL_TOL: f64 = 1e-8;
/// `R` must vanish on `ker V` to within this (relative) residual.
pub const KERNEL_CURVATURE_TOL: f64 = 1e-6;

/// Spectrum of `−R̂` after clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampedSpectrum {
    /// Eigenvalues of `−R̂_sym`, ascending, with noise-level negatives set to 0.
    pub values: Vec<f64>,
    pub clamped: usize,
    pub tolerance: f64,
}

/// Clamps the spectrum of `−R̂` at `CLAMP_REL_TOL · max(‖R̂‖, scale)`, plus
/// the pipeline's own truncation estimate when one is recorded. `scale` is
/// the natural curvature scale of the system, which keeps the tolerance
/// meaningful when `R̂` vanishes.
pub fn clamp_spectrum(op: &CurvatureOperator, scale: f64) -> Result<ClampedSpectrum> {
    let norm = op.symmetrized.norm();
    let truncation = op.estimate.as_ref().map_or(0.0, |e| e.truncation);
    let tolerance = (CLAMP_REL_TOL * norm.max(scale)).max(truncation);
    let mut values = Vec::with_capacity(op.dim());
    let mut clamped = 0;
    for &lam in op.eigenvalues.iter().rev() {
        let v = -lam;
        if v < -tolerance {
            return Err(Error::PositiveCurvature { eigenvalue: lam, tolerance });
        }
        if v < 0.0 {
            clamped += 1;
            values.push(0.0);
        } else {
            values.push(v);
        }
    }
    Ok(ClampedSpectrum { values, clamped, tolerance })
}

/// `Tr √(−R̂)` for a reduced curvature operator.
pub fn bound_integrand_of(op: &CurvatureOperator, scale: f64) -> Result<f64> {
    let s = clamp_spectrum(op, scale)?;
    Ok(linalg::tree_sum(&s.values.iter().map(|v| v.sqrt()).collect::<Vec<_>>()))
}

/// Restriction of `(V, R)` to the orthogonal complement of `ker V`.
fn restrict_off_kernel(v: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if v.shape() != r.shape() || v.nrows() != v.ncols() {
        return Err(Error::DimensionMismatch { expected: v.nrows(), got: r.nrows() });
    }
    let (vals, vecs) = linalg::sym_eigen(v);
    let vmax = vals.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let thr = KERNEL_REL_TOL * vmax;
    if vals.iter().any(|&x| x < -thr.max(1e-14)) {
        return Err(Error::InvalidInput(format!("V is not nonnegative (min eigenvalue {:e})", vals[0])));
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vmax > 0.0 && vals[i] > thr).collect();
    let kernel: Vec<usize> = (0..vals.len()).filter(|i| !keep.contains(i)).collect();
    let rs = linalg::symmetrize(r);
    if !kernel.is_empty() {
        let k = DMatrix::from_columns(&kernel.iter().map(|&i| vecs.column(i).into_owned()).collect::<Vec<_>>());
        let residual = (&rs * &k).norm() / rs.norm().max(1.0);
        if residual > KERNEL_CURVATURE_TOL {
            return Err(Error::InconsistentPair { residual });
        }
    }
    if keep.is_empty() {
        return Ok((DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)));
    }
    let p = DMatrix::from_columns(&keep.iter().map(|&i| vecs.column(i).into_owned()).collect::<Vec<_>>());
    Ok((p.transpose() * v * &p, p.transpose() * rs * &p))
}

/// `r′ = ½ Tr[V⁰ − R⁰ (V⁰)⁻¹]` on the complement of `ker V`.
pub fn r_prime(v: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let (v0, r0) = restrict_off_kernel(v, r)?;
    if v0.nrows() == 0 {
        return Ok(0.0);
    }
    let vi = linalg::inverse(&v0).ok_or(Error::NonFinite("V restricted to the complement of its kernel"))?;
    Ok(0.5 * (v0 - r0 * vi).trace())
}

/// `r = Tr[(V⁰ − R⁰ V⁰)(I + (V⁰)²)⁻¹]` on the complement of `ker V`.
pub fn r_full(v: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<f64> {
    let (v0, r0) = restrict_off_kernel(v, r)?;
    let k = v0.nrows();
    if k == 0 {
        return Ok(0.0);
    }
    let a = DMatrix::identity(k, k) + &v0 * &v0;
    let ai = linalg::inverse(&a).ok_or(Error::NonFinite("I + V²"))?;
    Ok(((&v0 - r0 * &v0) * ai).trace())
}

/// Both sides of `Tr[MU + NU⁻¹] ≥ 2 Tr √M √N` and the equality defect
/// `‖√M U − √N‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub equality_defect: f64,
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput(format!("{name} is not square")));
    }
    if linalg::asym_norm(m) > 1e-10 * m.norm().max(1.0) {
        return Err(Error::InvalidInput(format!("{name} is not symmetric")));
    }
    Ok(())
}

pub fn trace_inequality(m: &DMatrix<f64>, n: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<TraceInequality> {
    for (name, x) in [("M", m), ("N", n), ("U", u)] {
        check_symmetric(name, x)?;
    }
    if m.shape() != n.shape() || m.shape() != u.shape() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: u.nrows() });
    }
    for (name, x) in [("M", m), ("N", n)] {
        let (vals, _) = linalg::sym_eigen(x);
        if vals.len() > 0 && vals[0] < -1e-12 * x.norm().max(1.0) {
            return Err(Error::InvalidInput(format!("{name} is not positive semidefinite")));
        }
    }
    let (uvals, _) = linalg::sym_eigen(u);
    if uvals.len() > 0 && !(uvals[0] > 0.0) {
        return Err(Error::InvalidInput("U is not positive definite".into()));
    }
    let ui = linalg::inverse(u).ok_or(Error::InvalidInput("U is singular".into()))?;
    let (sm, sn) = (linalg::sym_sqrt(m), linalg::sym_sqrt(n));
    Ok(TraceInequality {
        lhs: (m * u + n * ui).trace(),
        rhs: 2.0 * (&sm * &sn).trace(),
        equality_defect: (sm * u - sn).norm(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jacobi::CurvatureKind;
    use approx::assert_relative_eq;

    fn m1(x: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x)
    }

    #[test]
    fn r_prime_and_r_full_scalars() {
        assert_relative_eq!(r_prime(&m1(1.0), &m1(-1.0)).unwrap(), 1.0);
        assert_relative_eq!(r_prime(&m1(2.0), &m1(-1.0)).unwrap(), 1.25);
        assert_eq!(r_prime(&m1(0.0), &m1(0.0)).unwrap(), 0.0);
        assert_relative_eq!(r_full(&m1(1.0), &m1(-1.0)).unwrap(), 1.0);
        assert_eq!(r_full(&m1(0.0), &m1(0.0)).unwrap(), 0.0);
        assert_relative_eq!(r_full(&m1(2.0), &m1(-1.0)).unwrap(), 0.8);
    }

    #[test]
    fn kernel_of_v_must_be_flat() {
        let v = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        let ok = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 0.0]));
        assert_relative_eq!(r_prime(&v, &ok).unwrap(), 1.0);
        let bad = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -0.5]));
        assert!(matches!(r_prime(&v, &bad), Err(Error::InconsistentPair { .. })));
    }

    #[test]
    fn bound_integrand_examples() {
        let op = |d: &[f64]| CurvatureOperator::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)), CurvatureKind::Reduced);
        assert_eq!(bound_integrand_of(&op(&[0.0]), 1.0).unwrap(), 0.0);
        assert_eq!(bound_integrand_of(&op(&[-1.0]), 1.0).unwrap(), 1.0);
        assert_relative_eq!(bound_integrand_of(&op(&[-4.0, -1.0]), 1.0).unwrap(), 3.0, epsilon = 1e-14);
        assert_eq!(bound_integrand_of(&op(&[1e-12, -1.0]), 1.0).unwrap(), 1.0);
        assert!(matches!(bound_integrand_of(&op(&[1e-3, -1.0]), 1.0), Err(Error::PositiveCurvature { .. })));
    }

    #[test]
    fn trace_inequality_examples() {
        let t = trace_inequality(&m1(1.0), &m1(1.0), &m1(1.0)).unwrap();
        assert_eq!((t.lhs, t.rhs, t.equality_defect), (2.0, 2.0, 0.0));
        let t = trace_inequality(&m1(1.0), &m1(1.0), &m1(2.0)).unwrap();
        assert_eq!((t.lhs, t.rhs), (2.5, 2.0));
        assert!(trace_inequality(&m1(-1.0), &m1(1.0), &m1(1.0)).is_err());
        assert!(trace_inequality(&m1(1.0), &m1(1.0), &m1(0.0)).is_err());
    }
}
