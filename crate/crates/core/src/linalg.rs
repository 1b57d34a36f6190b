//! Small dense helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric part `(m + mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm of the antisymmetric part.
pub fn asym_norm(m: &DMatrix<f64>) -> f64 {
    ((m - m.transpose()) * 0.5).norm()
}

/// Eigen-decomposition of the symmetric part, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d = DMatrix::from_diagonal(&vals.map(f));
    &vecs * d * vecs.transpose()
}

/// Principal square root of a symmetric positive semidefinite matrix.
/// Tiny negative eigenvalues (rounding) are treated as zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |x| x.max(0.0).sqrt())
}

/// `m^{-1/2}` for a symmetric definite matrix, using `|λ|`.
pub fn sym_inv_sqrt_abs(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |x| 1.0 / x.abs().sqrt())
}

/// Full SVD with descending singular values. nalgebra's dynamic SVD can
/// return a wrong decomposition for nearly rank-deficient input, so this
/// goes through faer.
struct Svd {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

fn svd(m: &DMatrix<f64>) -> Svd {
    let a = faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let d = a.svd().expect("SVD did not converge");
    let (u, v) = (d.U(), d.V());
    let s = d.S().column_vector();
    Svd {
        u: DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        s: DVector::from_fn(s.nrows(), |i, _| s[i]),
        v: DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    }
}

/// Singular values, descending.
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DVector::zeros(0);
    }
    svd(m).s
}

/// Ratio of smallest to largest singular value (0 for a zero matrix).
pub fn inverse_condition(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    if s.is_empty() || s[0] == 0.0 {
        return 0.0;
    }
    s[s.len() - 1] / s[0]
}

/// Numerical rank with the scale-invariant cut `σ_i > rel_tol · σ_max`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let s = singular_values(m);
    if s.is_empty() || s[0] == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * s[0]).count()
}

/// Orthonormal basis of the column span. Errors when the span has fewer
/// than `expected` dimensions at the relative tolerance.
pub fn orthonormal_columns(m: &DMatrix<f64>, expected: usize, rel_tol: f64) -> Result<DMatrix<f64>> {
    let r = rank(m, rel_tol);
    if r < expected {
        return Err(Error::RankDeficient { rank: r, expected });
    }
    Ok(svd(m).u.columns(0, expected).into_owned())
}

/// Orthonormal basis of the right null space of `m` (columns), keeping
/// singular values below `rel_tol · σ_max`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    let d = svd(m);
    let smax = d.s.iter().cloned().fold(0.0, f64::max);
    let kept = d.s.iter().filter(|&&x| smax > 0.0 && x > rel_tol * smax).count();
    d.v.columns(kept, cols - kept).into_owned()
}

/// Inverse via LU, failing with the supplied condition report when singular.
pub fn inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().lu().try_inverse()
}

/// Pairwise (binary tree) summation; the evaluation order depends only on
/// the slice length, so results are reproducible bit-for-bit.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}

/// Mean and standard error of the mean (sample standard deviation / √n).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = tree_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = tree_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.0]));
        let r = sym_sqrt(&m);
        assert_relative_eq!(r[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(r[(1, 1)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(r[(2, 2)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn null_space_of_row() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let n = null_space(&m, 1e-10);
        assert_eq!(n.ncols(), 2);
        assert!((&m * &n).norm() < 1e-12);
    }

    #[test]
    fn rank_and_orthonormal() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(rank(&m, 1e-10), 1);
        assert!(orthonormal_columns(&m, 2, 1e-10).is_err());
        let q = orthonormal_columns(&m, 1, 1e-10).unwrap();
        assert_relative_eq!(q.column(0).norm(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn nearly_rank_one_range() {
        // Rank-one projector on which nalgebra's dynamic SVD loses the range.
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[0.40066533460248555, -0.49003328892063824, -0.4900332889206055, 0.5993346653975125],
        );
        let q = orthonormal_columns(&m, 1, 1e-10).unwrap();
        let col = m.column(0) / m.column(0).norm();
        assert_relative_eq!(q.column(0).dot(&col).abs(), 1.0, epsilon = 1e-12);
        let s = singular_values(&m);
        assert!(s[0] >= s[1]);
    }

    #[test]
    fn tree_sum_matches_plain_sum_on_integers() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(tree_sum(&xs), 5050.0);
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
