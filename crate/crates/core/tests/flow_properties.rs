use std::sync::Arc;

use hamcurv::flow::{flow, step_with_tangent, IntegratorConfig, Scheme};
use hamcurv::standard_form;
use hamcurv::systems::{
    geodesic2d, liouville_sample, mechanical, mechanical_on_metric, CosinePotential, CosineTerm, HyperbolicHalfPlane,
    PolynomialPotential, ZeroPotential,
};
use hamcurv::{HamiltonianSystem, LevelSet, PhasePoint, Topology};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn pendulum() -> HamiltonianSystem {
    let u = CosinePotential { n: 1, terms: vec![CosineTerm { amplitude: -1.0, wavevector: vec![1.0], phase: 0.0 }] };
    mechanical(Arc::new(u), vec![Topology::Periodic(std::f64::consts::TAU)]).unwrap()
}

fn wavy_on_hyperbolic() -> HamiltonianSystem {
    let u = CosinePotential { n: 2, terms: vec![CosineTerm { amplitude: 0.3, wavevector: vec![1.0, 0.5], phase: 0.2 }] };
    mechanical_on_metric(Arc::new(HyperbolicHalfPlane), Arc::new(u)).unwrap()
}

fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let j = standard_form(m.nrows() / 2).form().clone();
    (m.transpose() * &j * m - &j).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steps_are_symplectic(p1 in -1.5..1.5f64, p2 in -1.5..1.5f64, x in -1.0..1.0f64, y in 0.5..2.0f64, h in 1e-3..5e-2f64) {
        prop_assume!(p1.abs() + p2.abs() > 0.1);
        let z = PhasePoint::from_slices(&[p1, p2], &[x, y]);
        let harmonic = mechanical(Arc::new(PolynomialPotential::isotropic_harmonic(2)), vec![Topology::Unbounded; 2]).unwrap();
        for sys in [harmonic, geodesic2d(Arc::new(HyperbolicHalfPlane)), wavy_on_hyperbolic()] {
            let cfg = IntegratorConfig::for_system(&sys, h).unwrap().with_recenter(true);
            let (_, m) = step_with_tangent(&sys, &z, h, &cfg).unwrap();
            prop_assert!(symplectic_defect(&m) < 1e-9, "defect {}", symplectic_defect(&m));
        }
    }
}

#[test]
fn explicit_euler_is_detected_as_non_symplectic() {
    let sys = pendulum();
    let cfg = IntegratorConfig::new(Scheme::ExplicitEuler, 1e-2).unwrap();
    let (_, m) = step_with_tangent(&sys, &PhasePoint::from_slices(&[1.0], &[0.5]), 1e-2, &cfg).unwrap();
    assert!(symplectic_defect(&m) > 1e-6);
}

#[test]
fn pendulum_energy_and_tangent_pairs_are_preserved() {
    let sys = pendulum();
    let z = PhasePoint::from_slices(&[1.0], &[0.5]);
    let cfg = IntegratorConfig::for_system(&sys, 1e-3).unwrap();
    let e0 = sys.energy(&z).unwrap();
    let tr = flow(&sys, &z, 100.0, &cfg).unwrap();
    assert!(tr.energy_drift / e0.abs() <= 1e-6, "relative drift {:e}", tr.energy_drift / e0.abs());

    let mut m = DMatrix::identity(2, 2);
    let mut cur = z;
    for _ in 0..100_000 {
        let (w, s) = step_with_tangent(&sys, &cur, 1e-3, &cfg).unwrap();
        m = s * m;
        cur = w;
    }
    let (u, v) = (nalgebra::DVector::from_vec(vec![1.0, 0.3]), nalgebra::DVector::from_vec(vec![-0.2, 1.0]));
    let space = standard_form(1);
    let before = space.sigma(&u, &v);
    let after = space.sigma(&(&m * &u), &(&m * &v));
    assert!((after - before).abs() <= 1e-6 * before.abs(), "{before} vs {after}");
}

#[test]
fn liouville_measure_is_flow_invariant_on_free_torus() {
    let l = std::f64::consts::TAU;
    let sys = mechanical(Arc::new(ZeroPotential { n: 2 }), vec![Topology::Periodic(l); 2]).unwrap();
    let level = LevelSet::new(sys.clone(), 0.5, vec![None, None]).unwrap();
    let pts = liouville_sample(&level, 4000, 3).unwrap();
    let cfg = IntegratorConfig::for_system(&sys, 1e-2).unwrap();
    let moved: Vec<PhasePoint> = pts.iter().map(|z| flow(&sys, z, 1.0, &cfg).unwrap().last().clone()).collect();
    let observables: [fn(&PhasePoint) -> f64; 4] = [
        |z| z.q[0].cos(),
        |z| (z.q[0] + z.q[1]).sin(),
        |z| z.p[0] * z.p[0] * (2.0 * z.q[1]).cos(),
        |z| z.p[0] * z.q[1].sin(),
    ];
    for f in observables {
        let a: Vec<f64> = pts.iter().map(f).collect();
        let b: Vec<f64> = moved.iter().map(f).collect();
        let (ma, sa) = hamcurv::linalg::mean_stderr(&a);
        let (mb, sb) = hamcurv::linalg::mean_stderr(&b);
        assert!((ma - mb).abs() <= 4.0 * (sa * sa + sb * sb).sqrt(), "{ma} vs {mb}");
    }
}
