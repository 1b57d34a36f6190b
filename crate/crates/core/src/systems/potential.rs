//! Scalar fields on configuration space: potentials and conformal factors.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A smooth function of position with analytic gradient and Hessian.
pub trait ScalarField: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn value(&self, q: &DVector<f64>) -> f64;
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64>;
}

/// `U ≡ 0`.
#[derive(Debug, Clone)]
pub struct ZeroPotential {
    pub n: usize,
}

impl ScalarField for ZeroPotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, _q: &DVector<f64>) -> f64 {
        0.0
    }
    fn gradient(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.n)
    }
    fn hessian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.n, self.n)
    }
}

/// One monomial `coef · Π q_i^{powers_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub powers: Vec<u32>,
}

/// Sum of monomials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialPotential {
    pub n: usize,
    pub terms: Vec<Monomial>,
}

impl PolynomialPotential {
    /// `½ qᵀ K q` for symmetric `K`.
    pub fn quadratic(k: &DMatrix<f64>) -> Self {
        let n = k.nrows();
        let mut terms = Vec::new();
        for i in 0..n {
            for j in i..n {
                let c = if i == j { 0.5 * k[(i, i)] } else { 0.5 * (k[(i, j)] + k[(j, i)]) };
                if c != 0.0 {
                    let mut powers = vec![0; n];
                    powers[i] += 1;
                    powers[j] += 1;
                    terms.push(Monomial { coef: c, powers });
                }
            }
        }
        Self { n, terms }
    }

    /// `½ |q|²`.
    pub fn isotropic_harmonic(n: usize) -> Self {
        Self::quadratic(&DMatrix::identity(n, n))
    }

    fn pow(x: f64, k: u32) -> f64 {
        x.powi(k as i32)
    }

    fn term_value(&self, m: &Monomial, q: &DVector<f64>, d: &[usize]) -> f64 {
        // Differentiate monomial by the multiset of indices in `d`.
        let mut powers: Vec<i64> = m.powers.iter().map(|&p| p as i64).collect();
        let mut c = m.coef;
        for &i in d {
            if powers[i] == 0 {
                return 0.0;
            }
            c *= powers[i] as f64;
            powers[i] -= 1;
        }
        powers
            .iter()
            .enumerate()
            .fold(c, |acc, (i, &p)| acc * Self::pow(q[i], p as u32))
    }
}

impl ScalarField for PolynomialPotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, q: &DVector<f64>) -> f64 {
        self.terms.iter().map(|m| self.term_value(m, q, &[])).sum()
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n, |i, _| {
            self.terms.iter().map(|m| self.term_value(m, q, &[i])).sum()
        })
    }
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| {
            self.terms.iter().map(|m| self.term_value(m, q, &[i, j])).sum()
        })
    }
}

/// One term `amplitude · cos(k·q + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

/// Trigonometric potential; periodic on a torus when the wavevectors are
/// integer multiples of `2π/L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosinePotential {
    pub n: usize,
    pub terms: Vec<CosineTerm>,
}

impl CosinePotential {
    fn arg(t: &CosineTerm, q: &DVector<f64>) -> f64 {
        t.wavevector.iter().zip(q.iter()).map(|(k, x)| k * x).sum::<f64>() + t.phase
    }
}

impl ScalarField for CosinePotential {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, q: &DVector<f64>) -> f64 {
        self.terms.iter().map(|t| t.amplitude * Self::arg(t, q).cos()).sum()
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.n);
        for t in &self.terms {
            let s = -t.amplitude * Self::arg(t, q).sin();
            for i in 0..self.n {
                g[i] += s * t.wavevector[i];
            }
        }
        g
    }
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for t in &self.terms {
            let c = -t.amplitude * Self::arg(t, q).cos();
            for i in 0..self.n {
                for j in 0..self.n {
                    h[(i, j)] += c * t.wavevector[i] * t.wavevector[j];
                }
            }
        }
        h
    }
}

/// Pointwise sum of fields of equal dimension.
#[derive(Debug, Clone)]
pub struct SumField(pub Vec<std::sync::Arc<dyn ScalarField>>);

impl ScalarField for SumField {
    fn dim(&self) -> usize {
        self.0.first().map_or(0, |f| f.dim())
    }
    fn value(&self, q: &DVector<f64>) -> f64 {
        self.0.iter().map(|f| f.value(q)).sum()
    }
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        self.0
            .iter()
            .fold(DVector::zeros(self.dim()), |acc, f| acc + f.gradient(q))
    }
    fn hessian(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        self.0
            .iter()
            .fold(DMatrix::zeros(n, n), |acc, f| acc + f.hessian(q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &dyn ScalarField, q: &DVector<f64>) {
        let step = 1e-5;
        let g = f.gradient(q);
        let h = f.hessian(q);
        for i in 0..f.dim() {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += step;
            qm[i] -= step;
            let fd = (f.value(&qp) - f.value(&qm)) / (2.0 * step);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "grad {i}");
            let fdh = (f.gradient(&qp) - f.gradient(&qm)) / (2.0 * step);
            for j in 0..f.dim() {
                assert!((fdh[j] - h[(j, i)]).abs() <= 1e-6 * (1.0 + h[(j, i)].abs()));
            }
        }
    }

    #[test]
    fn polynomial_derivatives() {
        let p = PolynomialPotential {
            n: 2,
            terms: vec![
                Monomial { coef: 0.3, powers: vec![3, 1] },
                Monomial { coef: -1.2, powers: vec![0, 2] },
                Monomial { coef: 0.7, powers: vec![1, 0] },
            ],
        };
        fd_check(&p, &DVector::from_vec(vec![0.4, -1.3]));
    }

    #[test]
    fn quadratic_constructor() {
        let p = PolynomialPotential::isotropic_harmonic(2);
        let q = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(p.value(&q), 2.5);
        assert_eq!(p.hessian(&q), DMatrix::identity(2, 2));
    }

    #[test]
    fn cosine_derivatives() {
        let c = CosinePotential {
            n: 2,
            terms: vec![
                CosineTerm { amplitude: 1.0, wavevector: vec![1.0, 0.0], phase: 0.0 },
                CosineTerm { amplitude: 0.4, wavevector: vec![1.0, -1.0], phase: 0.3 },
            ],
        };
        fd_check(&c, &DVector::from_vec(vec![0.9, 2.1]));
    }
}
