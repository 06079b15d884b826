use std::hint::black_box;

use coshflows::cosh_core::{cell_n_explicit, cosh_dual, cosh_primal, rate_density_l};
use coshflows::fixtures;
use coshflows::fokker_planck_1d::{fv_evolve, Scheme, Stepping};
use coshflows::graph_system::evolve;
use coshflows::network_reduction::{capacity, reduce_to_capacity};
use coshflows_bench::{bump, cycle, fv_problem};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn scalar(c: &mut Criterion) {
    let xs: Vec<f64> = (0..1000).map(|i| -10.0 + 0.02 * i as f64).collect();
    c.bench_function("cosh_dual x1000", |b| b.iter(|| xs.iter().map(|&x| cosh_dual(black_box(x))).sum::<f64>()));
    c.bench_function("cosh_primal x1000", |b| b.iter(|| xs.iter().map(|&x| cosh_primal(black_box(x))).sum::<f64>()));
    c.bench_function("cell_n_explicit x1000", |b| {
        b.iter(|| xs.iter().map(|&x| cell_n_explicit(black_box(0.1 * x), 1.0, 2.0, 1.5)).sum::<f64>())
    });
    c.bench_function("rate_density_l x1000", |b| {
        b.iter(|| xs.iter().map(|&x| rate_density_l(black_box(0.1 * x), 1.0, 2.0, 1.5)).sum::<f64>())
    });
}

fn graphs(c: &mut Criterion) {
    let mut g = c.benchmark_group("evolve cycle");
    for n in [10, 100] {
        let graph = cycle(n);
        let rho0 = bump(n);
        let times: Vec<f64> = (0..=20).map(|i| 0.1 * i as f64).collect();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| evolve(&graph, &rho0, 2.0, &times).unwrap())
        });
    }
    g.finish();
}

fn reduction(c: &mut Criterion) {
    let net = fixtures::random_two_terminal(20, 7).unwrap();
    let f = vec![0.0; 20];
    let order = net.fast_nodes();
    c.bench_function("capacity 20 nodes", |b| b.iter(|| capacity(&net, &f).unwrap().capacity));
    c.bench_function("star-mesh 20 nodes", |b| b.iter(|| reduce_to_capacity(&net, &f, &order).unwrap()));
}

fn finite_volume(c: &mut Criterion) {
    let times: Vec<f64> = (0..=10).map(|i| 0.01 * i as f64).collect();
    let rho0 = bump(200);
    let sg = fv_problem(200, Scheme::ScharfetterGummel);
    let up = fv_problem(200, Scheme::Upwind);
    c.bench_function("SG implicit 200 cells", |b| {
        b.iter(|| fv_evolve(&sg, &rho0, &times, Stepping::ImplicitEuler { dt: 1e-3 }).unwrap())
    });
    c.bench_function("upwind explicit 200 cells", |b| {
        b.iter(|| fv_evolve(&up, &rho0, &times, Stepping::Explicit { cfl: 0.2 }).unwrap())
    });
}

criterion_group!(benches, scalar, graphs, reduction, finite_volume);
criterion_main!(benches);
