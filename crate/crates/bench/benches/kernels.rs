use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vri::descriptors::{compute_field, ld_point_with, LdConfig, SectionSpec};
use vri::dynamics::{rk4_step, PhaseState};
use vri::experiments::{branching_run, BranchingConfig};
use vri::{critical_points, extract_manifolds, flatness, lift_to_phase_space, polygon_area, DomainRect, SystemParams};

fn potential(c: &mut Criterion) {
    let p = SystemParams::new(0.2);
    c.bench_function("critical_points", |b| {
        b.iter(|| critical_points(black_box(&p)).unwrap())
    });
    let domain = DomainRect::top_well();
    c.bench_function("flatness_101", |b| b.iter(|| flatness(black_box(&p), &domain).unwrap()));
}

fn dynamics(c: &mut Criterion) {
    let p = SystemParams::new(0.2);
    let s = PhaseState::new(0.05, 0.1, 0.4, -0.05);
    c.bench_function("rk4_step", |b| b.iter(|| rk4_step(black_box(&s), &p, 1e-3)));
    let cfg = BranchingConfig::default().with_n(20);
    c.bench_function("branching_20", |b| {
        b.iter(|| branching_run(black_box(&p), &cfg).unwrap())
    });
}

fn descriptors(c: &mut Criterion) {
    let p = SystemParams::new(0.2);
    let sec = SectionSpec::default();
    let s = lift_to_phase_space(0.1, 0.05, &sec, &p).unwrap();
    let cfg = LdConfig::default();
    c.bench_function("ld_point_tau8", |b| b.iter(|| ld_point_with(black_box(&s), &p, &cfg)));
}

fn manifolds(c: &mut Criterion) {
    let p = SystemParams::new(0.2);
    let field = compute_field(&SectionSpec::default().with_grid(121, 121), &p, 4.0).unwrap();
    c.bench_function("extract_manifolds_121", |b| {
        b.iter(|| extract_manifolds(black_box(&field), 0.97).unwrap())
    });
    let ring: Vec<(f64, f64)> = (0..512)
        .map(|k| {
            let t = k as f64 / 512.0 * std::f64::consts::TAU;
            (t.cos(), 0.5 * t.sin())
        })
        .collect();
    c.bench_function("polygon_area_512", |b| {
        b.iter(|| polygon_area(black_box(&ring)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = potential, dynamics, descriptors, manifolds
}
criterion_main!(benches);
