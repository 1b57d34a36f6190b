use std::sync::Arc;

use approx::assert_relative_eq;
use hamcurv::flow::{flow, IntegratorConfig};
use hamcurv::jacobi::{canonical_frame, curvature_along, full_curvature, reduced_curvature, CurvatureKind, JacobiConfig};
use hamcurv::systems::{
    geodesic2d, mechanical, mechanical_on_metric, CosinePotential, CosineTerm, HyperbolicHalfPlane, Metric2D,
    PolynomialPotential,
};
use hamcurv::{HamiltonianSystem, PhasePoint, ScalarField, Topology};
use nalgebra::DMatrix;

fn wavy() -> Arc<dyn ScalarField> {
    Arc::new(CosinePotential {
        n: 2,
        terms: vec![
            CosineTerm { amplitude: 0.7, wavevector: vec![1.0, 2.0], phase: 0.3 },
            CosineTerm { amplitude: -0.4, wavevector: vec![0.0, 1.0], phase: 0.0 },
        ],
    })
}

fn systems() -> Vec<(&'static str, HamiltonianSystem, PhasePoint)> {
    let hyp: Arc<dyn Metric2D> = Arc::new(HyperbolicHalfPlane);
    vec![
        (
            "cosine",
            mechanical(wavy(), vec![Topology::Unbounded; 2]).unwrap(),
            PhasePoint::from_slices(&[0.8, -0.5], &[0.4, 1.1]),
        ),
        (
            "harmonic",
            mechanical(Arc::new(PolynomialPotential::isotropic_harmonic(2)), vec![Topology::Unbounded; 2]).unwrap(),
            PhasePoint::from_slices(&[1.0, 0.0], &[1.0, 1.0]),
        ),
        ("hyperbolic", geodesic2d(hyp.clone()), PhasePoint::from_slices(&[0.6, 0.8], &[0.3, 1.0])),
        ("hyperbolic+U", mechanical_on_metric(hyp, wavy()).unwrap(), PhasePoint::from_slices(&[0.8, -0.5], &[0.4, 1.1])),
    ]
}

fn sorted_eigs(m: &DMatrix<f64>) -> Vec<f64> {
    hamcurv::linalg::sym_eigen(m).0.iter().cloned().collect()
}

#[test]
fn curvature_is_flow_covariant() {
    let cfg = JacobiConfig::default();
    for (name, sys, z) in systems() {
        let t = 0.3;
        let integ = IntegratorConfig::for_system(&sys, 1e-4).unwrap();
        let zt = flow(&sys, &z, t, &integ).unwrap().points.last().unwrap().clone();
        for kind in [CurvatureKind::Full, CurvatureKind::Reduced] {
            let along = curvature_along(&sys, &z, t, kind, &cfg).unwrap();
            let direct = match kind {
                CurvatureKind::Full => full_curvature(&sys, &zt, &cfg),
                CurvatureKind::Reduced => reduced_curvature(&sys, &zt, &cfg),
            }
            .unwrap();
            let (a, b) = (sorted_eigs(&along.operator.matrix), sorted_eigs(&direct.operator.matrix));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-4 * y.abs().max(1.0), "{name} {kind:?}: {a:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn canonical_frame_solves_the_jacobi_equation() {
    let cfg = JacobiConfig::default();
    let d = 0.04;
    for (name, sys, z) in systems() {
        for kind in [CurvatureKind::Full, CurvatureKind::Reduced] {
            let f = canonical_frame(&sys, &z, &[-d, -d / 2.0, 0.0, d / 2.0, d], kind, &cfg).unwrap();
            let r = match kind {
                CurvatureKind::Full => full_curvature(&sys, &z, &cfg),
                CurvatureKind::Reduced => reduced_curvature(&sys, &z, &cfg),
            }
            .unwrap();
            // Second differences at spacings d and d/2, extrapolated.
            let coarse = (&f[0] - &f[2] * 2.0 + &f[4]) / (d * d);
            let fine = (&f[1] - &f[2] * 2.0 + &f[3]) / (d * d / 4.0);
            let second = (fine * 4.0 - coarse) / 3.0;
            let expected = -(&f[2] * &r.operator.symmetrized);
            let err = (&second - &expected).norm() / expected.norm().max(1.0);
            assert!(err < 1e-4, "{name} {kind:?}: relative defect {err:e}");
        }
    }
}

#[test]
fn canonical_frame_starts_on_the_chart_basis() {
    let (_, sys, z) = systems().remove(0);
    let cfg = JacobiConfig::default();
    let c = reduced_curvature(&sys, &z, &cfg).unwrap();
    let e0 = canonical_frame(&sys, &z, &[0.0], CurvatureKind::Reduced, &cfg).unwrap();
    assert_relative_eq!(e0[0], c.chart.e, epsilon = 1e-12);
}
