use std::sync::Arc;

use hamcurv::entropy::{
    linear_system_flow, lyapunov_spectrum, riccati_integrate, unstable_riccati, unstable_solution, LyapunovConfig,
    RiccatiConfig, UnstableConfig,
};
use hamcurv::flow::{flow, IntegratorConfig};
use hamcurv::jacobi::{mechanical_closed_form, restrict_to_complement};
use hamcurv::systems::{geodesic2d, mechanical, HyperbolicHalfPlane, PolynomialPotential};
use hamcurv::{PhasePoint, Topology};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn sym(k: usize, xs: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_column_slice(k, k, &xs[..k * k]);
    (&m + m.transpose()) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn riccati_matches_linear_system(
        k in 1usize..=3,
        a in prop::collection::vec(-1.0..1.0f64, 9),
        b in prop::collection::vec(-1.0..1.0f64, 9),
        v in prop::collection::vec(-1.0..1.0f64, 9),
        w in 0.5..3.0f64,
    ) {
        // R(t) = A − I + B sin(ωt), V₀ = CᵀC.
        let (ra, rb) = (sym(k, &a) - DMatrix::identity(k, k), sym(k, &b));
        let c = DMatrix::from_column_slice(k, k, &v[..k * k]);
        let v0 = c.transpose() * &c * 0.3;
        let mut r = |t: f64| Ok(&ra + &rb * (w * t).sin());
        let cfg = RiccatiConfig::default();
        let s = riccati_integrate(&mut r, &v0, (0.0, 1.0), &cfg).unwrap();
        prop_assume!(!s.blowup_flag);
        let (xi, eta) = linear_system_flow(&mut r, &DMatrix::identity(k, k), &-&v0, (0.0, 1.0), &cfg).unwrap();
        let lin = -(eta * xi.try_inverse().unwrap());
        prop_assert!((&s.v - &lin).norm() <= 1e-6 * lin.norm().max(1.0), "{} vs {}", s.v, lin);
        prop_assert!((&s.v - s.v.transpose()).norm() <= 1e-8);
    }
}

#[test]
fn unstable_solution_agrees_with_callback_riccati() {
    // Inverted anisotropic oscillator: the curvature varies along the orbit.
    let k = DMatrix::from_row_slice(2, 2, &[-1.0, -0.1, -0.1, -2.0]);
    let sys = mechanical(Arc::new(PolynomialPotential::quadratic(&k)), vec![Topology::Unbounded; 2]).unwrap();
    let z = PhasePoint::from_slices(&[0.7, -0.4], &[0.2, 0.5]);
    let geometric = unstable_solution(&sys, &z, 2.0, &UnstableConfig::default()).unwrap();

    let dt = 1e-3;
    let tr = flow(&sys, &z, -40.0, &IntegratorConfig::for_system(&sys, dt).unwrap()).unwrap();
    let rs: Vec<f64> = tr
        .points
        .iter()
        .map(|w| restrict_to_complement(&mechanical_closed_form(&sys, w).unwrap().1, &w.p)[(0, 0)])
        .collect();
    let mut r = |t: f64| {
        let x = -t / dt;
        let i = (x.floor() as usize).min(rs.len() - 2);
        let f = x - i as f64;
        Ok(DMatrix::from_element(1, 1, rs[i] * (1.0 - f) + rs[i + 1] * f))
    };
    let callback = unstable_riccati(&mut r, 1, 2.0, 32.0, 1e-6, &RiccatiConfig::default()).unwrap();
    assert!((geometric.v[(0, 0)] - callback.v[(0, 0)]).abs() < 1e-5, "{} vs {}", geometric.v, callback.v);
}

#[test]
fn unstable_trace_equals_positive_exponent_on_hyperbolic_plane() {
    let sys = geodesic2d(Arc::new(HyperbolicHalfPlane));
    for (p, energy) in [([0.6, 0.8], 0.5), ([1.2, 1.6], 2.0)] {
        let z = PhasePoint::from_slices(&p, &[0.3, 1.0]);
        // The step error grows with the expansion rate, so the faster orbit gets a finer step.
        let config = UnstableConfig { dt: 5e-4, ..UnstableConfig::default() };
        let v = unstable_solution(&sys, &z, 2.0, &config).unwrap();
        let spec = lyapunov_spectrum(&sys, &z, 100.0, 0.5, &LyapunovConfig::default()).unwrap();
        assert!((v.v.trace() - spec.chi).abs() < 1e-3, "E = {energy}: Tr V = {} vs chi = {}", v.v.trace(), spec.chi);
        assert!((v.v[(0, 0)] - (2.0 * energy as f64).sqrt()).abs() < 1e-6, "{}", v.v);
    }
}

#[test]
fn free_flow_has_zero_unstable_solution() {
    let sys = mechanical(Arc::new(hamcurv::systems::ZeroPotential { n: 2 }), vec![Topology::Unbounded; 2]).unwrap();
    let z = PhasePoint::from_slices(&[0.6, 0.8], &[0.0, 0.0]);
    let v = unstable_solution(&sys, &z, 2.0, &UnstableConfig::default()).unwrap();
    assert!(v.v.norm() < 1e-9, "{}", v.v);
    assert_eq!(v.rank, 0);
}
