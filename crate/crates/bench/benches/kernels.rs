use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use lapkit_bench::{damped_laplacian, quick_green};
use lapkit_core::critical::find_critical_points;
use lapkit_core::green::{green_quadrature_with, Window};
use lapkit_core::lap::{convolution_bound_check, LapOptions};
use lapkit_core::oscillatory::{eval_i1, CubicPhase, OscOptions, PhaseProblem};
use lapkit_core::weyl::find_weyl_points;
use lapkit_core::{eval_symbol, reference, C64};

fn symbol(c: &mut Criterion) {
    let m = reference::weyl_toy(0.5);
    c.bench_function("symbol/weyl_toy order 2", |b| b.iter(|| eval_symbol(&m, black_box(&[0.3, -0.2, 1.1]), 2)));
}

fn green(c: &mut Criterion) {
    let m = reference::laplacian(3);
    let o = quick_green();
    let mut g = c.benchmark_group("green");
    g.sample_size(10);
    g.bench_function("laplacian3d n=(3,1,0) z=1+0.1i", |b| {
        b.iter(|| green_quadrature_with(&m, &[3, 1, 0], &[0, 0, 0], black_box(C64::new(1.0, 0.1)), &Window::Torus, &o).unwrap())
    });
    g.finish();
}

fn searches(c: &mut Criterion) {
    let lap = reference::laplacian(3);
    let toy = reference::weyl_toy(0.0);
    let mut g = c.benchmark_group("search");
    g.sample_size(10);
    g.bench_function("critical points laplacian3d", |b| b.iter(|| find_critical_points(&lap, 0, 8).unwrap()));
    g.bench_function("weyl points weyl_toy", |b| b.iter(|| find_weyl_points(&toy, 8).unwrap()));
    g.finish();
}

fn operators(c: &mut Criterion) {
    let r = damped_laplacian(6);
    let o = LapOptions::default();
    let x = vec![C64::new(1.0, 0.0); r.op.sites()];
    let mut g = c.benchmark_group("operator");
    g.sample_size(10);
    g.bench_function("toeplitz apply N=6", |b| b.iter(|| r.op.apply(black_box(&x))));
    g.bench_function("norm N=6", |b| b.iter(|| r.op.norm(o.power_tol, o.power_max_iter, o.seed)));
    g.bench_function("convolution bound d=3 N=8", |b| b.iter(|| convolution_bound_check(3, 2.0, 1.0, 8).unwrap()));
    g.finish();
}

fn oscillatory(c: &mut Criterion) {
    let p = PhaseProblem::new(Arc::new(CubicPhase::definite(3)), &[0.0; 3], 0.2, 0.45).unwrap();
    let o = OscOptions { grid_nodes: 48, ..Default::default() };
    let mut g = c.benchmark_group("oscillatory");
    g.sample_size(10);
    g.bench_function("I1 t=16", |b| b.iter(|| eval_i1(&p, C64::new(0.05, 0.0), 16.0, &[1.0, 0.0, 0.0], &o).unwrap()));
    g.finish();
}

criterion_group!(benches, symbol, green, searches, operators, oscillatory);
criterion_main!(benches);
