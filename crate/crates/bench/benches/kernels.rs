use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hamcurv::entropy::{lyapunov_spectrum, riccati_integrate, trace_inequality, LyapunovConfig, RiccatiConfig};
use hamcurv::flow::{step_with_tangent, IntegratorConfig};
use hamcurv::jacobi::{reduced_curvature, JacobiConfig};
use hamcurv::systems::liouville_sample;
use hamcurv::{LevelSet, PhasePoint};
use hamcurv_bench::{coupled_pendula, hyperbolic, hyperbolic_point, spd, wavy_hyperbolic};

fn integrators(c: &mut Criterion) {
    let mut g = c.benchmark_group("tangent_step");
    for (name, sys) in [("hyperbolic", hyperbolic()), ("wavy_hyperbolic", wavy_hyperbolic()), ("coupled_pendula", coupled_pendula())] {
        let cfg = IntegratorConfig::for_system(&sys, 1e-3).unwrap();
        let z = if name == "coupled_pendula" { PhasePoint::from_slices(&[0.5, -0.3], &[0.2, 1.0]) } else { hyperbolic_point() };
        g.bench_function(name, |b| b.iter(|| step_with_tangent(&sys, black_box(&z), 1e-3, &cfg).unwrap()));
    }
    g.finish();
}

fn curvature(c: &mut Criterion) {
    let mut g = c.benchmark_group("reduced_curvature");
    g.sample_size(20);
    let cfg = JacobiConfig::default();
    let z = hyperbolic_point();
    for (name, sys) in [("hyperbolic", hyperbolic()), ("wavy_hyperbolic", wavy_hyperbolic())] {
        g.bench_function(name, |b| b.iter(|| reduced_curvature(&sys, black_box(&z), &cfg).unwrap()));
    }
    g.finish();
}

fn riccati(c: &mut Criterion) {
    let cfg = RiccatiConfig::default();
    c.bench_function("riccati_3x3_unit_time", |b| {
        let (a, v0) = (spd(3, 0.0), spd(3, 1.0) * 0.1);
        b.iter(|| {
            let mut r = |t: f64| Ok(-&a * (1.0 + 0.5 * t.sin()));
            riccati_integrate(&mut r, black_box(&v0), (0.0, 1.0), &cfg).unwrap()
        })
    });
}

fn trace(c: &mut Criterion) {
    let mut g = c.benchmark_group("trace_inequality");
    for k in [2, 6] {
        let (m, n, u) = (spd(k, 0.0), spd(k, 0.5), spd(k, 1.5));
        g.bench_function(format!("dim_{k}"), |b| b.iter(|| trace_inequality(black_box(&m), &n, &u).unwrap()));
    }
    g.finish();
}

fn lyapunov(c: &mut Criterion) {
    let mut g = c.benchmark_group("lyapunov");
    g.sample_size(10);
    let sys = hyperbolic();
    let z = hyperbolic_point();
    let cfg = LyapunovConfig::default();
    g.bench_function("hyperbolic_T10", |b| b.iter(|| lyapunov_spectrum(&sys, black_box(&z), 10.0, 0.5, &cfg).unwrap()));
    g.finish();
}

fn sampler(c: &mut Criterion) {
    let mut g = c.benchmark_group("liouville_sample");
    g.sample_size(20);
    let level = LevelSet::new(coupled_pendula(), 0.5, vec![None, None]).unwrap();
    g.bench_function("coupled_pendula_1000", |b| b.iter(|| liouville_sample(&level, 1000, black_box(3)).unwrap()));
    g.finish();
}

criterion_group!(benches, integrators, curvature, riccati, trace, lyapunov, sampler);
criterion_main!(benches);
