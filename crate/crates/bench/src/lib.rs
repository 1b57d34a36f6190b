//! Fixtures shared by the kernel benchmarks in `benches/`.

use std::sync::Arc;

use hamcurv::systems::{geodesic2d, mechanical, mechanical_on_metric, CosinePotential, CosineTerm, HyperbolicHalfPlane};
use hamcurv::{HamiltonianSystem, PhasePoint, Topology};
use nalgebra::DMatrix;

pub fn hyperbolic() -> HamiltonianSystem {
    geodesic2d(Arc::new(HyperbolicHalfPlane))
}

pub fn wavy_hyperbolic() -> HamiltonianSystem {
    let u = CosinePotential { n: 2, terms: vec![CosineTerm { amplitude: 0.1, wavevector: vec![1.0, 0.5], phase: 0.0 }] };
    mechanical_on_metric(Arc::new(HyperbolicHalfPlane), Arc::new(u)).unwrap()
}

/// Two coupled pendula on the torus.
pub fn coupled_pendula() -> HamiltonianSystem {
    let terms = vec![
        CosineTerm { amplitude: -1.0, wavevector: vec![1.0, 0.0], phase: 0.0 },
        CosineTerm { amplitude: -1.0, wavevector: vec![0.0, 1.0], phase: 0.0 },
        CosineTerm { amplitude: 0.3, wavevector: vec![1.0, -1.0], phase: 0.0 },
    ];
    mechanical(Arc::new(CosinePotential { n: 2, terms }), vec![Topology::Periodic(std::f64::consts::TAU); 2]).unwrap()
}

/// A point on `h = 1/2` for the hyperbolic plane.
pub fn hyperbolic_point() -> PhasePoint {
    PhasePoint::from_slices(&[0.6, 0.8], &[0.1, 1.0])
}

/// Symmetric positive definite `k × k` matrix with a fixed spread of eigenvalues.
pub fn spd(k: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |i, j| ((i * 7 + j * 3) as f64 * 0.37 + shift).sin());
    &a * a.transpose() + DMatrix::identity(k, k) * 0.1
}
