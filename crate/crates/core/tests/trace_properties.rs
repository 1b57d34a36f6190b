use hamcurv::entropy::{bound_integrand_of, r_prime, trace_inequality};
use hamcurv::jacobi::{CurvatureKind, CurvatureOperator};
use hamcurv::linalg::{sym_sqrt, symmetrize};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd(rng: &mut ChaCha8Rng, k: usize, rank: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, rank, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

fn random_pd(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    random_psd(rng, k, k) + DMatrix::identity(k, k) * 0.05
}

fn random_orthogonal(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0)).qr().q()
}

#[test]
fn thousand_seeded_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for i in 0..1000 {
        let k = 1 + i % 6;
        let rank_m = rng.random_range(0..=k);
        let m = random_psd(&mut rng, k, rank_m);
        let n = random_psd(&mut rng, k, k);
        let u = random_pd(&mut rng, k);
        let t = trace_inequality(&m, &n, &u).unwrap();
        assert!(t.lhs >= t.rhs - 1e-10, "triple {i}: {} < {}", t.lhs, t.rhs);
    }
}

#[test]
fn equality_triples_have_vanishing_defect() {
    // With M, N diagonal in a common basis, U = sym(√N √M⁻¹) gives √M U = √N.
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for i in 0..200 {
        let k = 1 + i % 6;
        let q = random_orthogonal(&mut rng, k);
        let dm = DVector::from_fn(k, |_, _| rng.random_range(0.1..3.0));
        let dn = DVector::from_fn(k, |_, _| rng.random_range(0.1..3.0));
        let m = &q * DMatrix::from_diagonal(&dm) * q.transpose();
        let n = &q * DMatrix::from_diagonal(&dn) * q.transpose();
        let u = symmetrize(&(sym_sqrt(&n) * sym_sqrt(&m).try_inverse().unwrap()));
        let t = trace_inequality(&m, &n, &u).unwrap();
        assert!(t.equality_defect <= 1e-8, "triple {i}: defect {:e}", t.equality_defect);
        assert!((t.lhs - t.rhs).abs() <= 1e-8 * t.rhs.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn defect_detects_strict_inequality(seed in any::<u64>(), k in 1usize..=6, scale in 1.1..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_orthogonal(&mut rng, k);
        let dm = DVector::from_fn(k, |_, _| rng.random_range(0.2..2.0));
        let m = &q * DMatrix::from_diagonal(&dm) * q.transpose();
        let n = m.clone();
        // U = scale · I is off the equality point U = I.
        let t = trace_inequality(&m, &n, &(DMatrix::identity(k, k) * scale)).unwrap();
        prop_assert!(t.lhs > t.rhs);
        prop_assert!(t.equality_defect > 1e-3);
    }

    #[test]
    fn r_prime_dominates_bound_integrand(seed in any::<u64>(), k in 1usize..=5) {
        // ½ Tr[V − R V⁻¹] ≥ Tr √(−R) for V > 0, R ≤ 0.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_pd(&mut rng, k);
        let r = -random_psd(&mut rng, k, k);
        let bound = bound_integrand_of(&CurvatureOperator::new(r.clone(), CurvatureKind::Reduced), 1.0).unwrap();
        prop_assert!(r_prime(&v, &r).unwrap() >= bound - 1e-10);
    }
}
