use std::sync::Arc;

use hamcurv::entropy::{entropy_bound, entropy_pesin, EntropyConfig};
use hamcurv::systems::{mechanical_on_metric, CosinePotential, CosineTerm, HyperbolicHalfPlane};
use hamcurv::LevelSet;

fn level() -> LevelSet {
    let u = CosinePotential { n: 2, terms: vec![CosineTerm { amplitude: 0.2, wavevector: vec![1.0, 0.0], phase: 0.4 }] };
    let sys = mechanical_on_metric(Arc::new(HyperbolicHalfPlane), Arc::new(u)).unwrap();
    LevelSet::new(sys, 1.0, vec![Some((-1.0, 1.0)), Some((0.5, 2.0))]).unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let level = level();
    let cfg = EntropyConfig::default();
    let one = in_pool(1, || entropy_bound(&level, 24, 9, &cfg).unwrap());
    let four = in_pool(4, || entropy_bound(&level, 24, 9, &cfg).unwrap());
    assert_eq!(one.estimate.mean.to_bits(), four.estimate.mean.to_bits());
    assert_eq!(one.estimate.stderr.to_bits(), four.estimate.stderr.to_bits());
    for (a, b) in one.samples.iter().zip(&four.samples) {
        assert_eq!(a.bound.map(f64::to_bits), b.bound.map(f64::to_bits));
    }

    let one = in_pool(1, || entropy_pesin(&level, 4, 5.0, 9, &cfg).unwrap());
    let three = in_pool(3, || entropy_pesin(&level, 4, 5.0, 9, &cfg).unwrap());
    assert_eq!(one.estimate.mean.to_bits(), three.estimate.mean.to_bits());
}
