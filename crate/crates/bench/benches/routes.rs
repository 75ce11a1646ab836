//! Criterion benchmarks: the three kernel routes on the reference models,
//! holding-time sampling, and path throughput.

use criterion::{criterion_group, criterion_main, Criterion};
use jumpq_bench::{birth_death, poisson, two_state};
use jumpq_core::feller::{self, FellerOptions};
use jumpq_core::kolmogorov::{self, OdeOptions};
use jumpq_core::simulator::{self, path_rng, SimulationConfig};
use std::hint::black_box;

fn bench_routes(c: &mut Criterion) {
    for (name, (model, u, t)) in [
        ("two-state", two_state()),
        ("poisson", poisson()),
        ("birth-death", birth_death()),
    ] {
        let mut group = c.benchmark_group(format!("kernel/{name}"));
        group.sample_size(20);
        group.bench_function("series", |b| {
            b.iter(|| {
                feller::feller_sum(&model, u, t, 1e-10, &FellerOptions::default()).unwrap()
            })
        });
        group.bench_function("backward", |b| {
            b.iter(|| kolmogorov::solve_backward(&model, t, u, &OdeOptions::default(), &[]).unwrap())
        });
        group.bench_function("forward", |b| {
            b.iter(|| kolmogorov::solve_forward(&model, u, t, &OdeOptions::default(), &[]).unwrap())
        });
        group.finish();
    }
}

fn bench_sampling(c: &mut Criterion) {
    let (model, u, _) = poisson();
    c.bench_function("sampling/holding-time", |b| {
        let mut rng = path_rng(1, 0);
        b.iter(|| black_box(simulator::sample_holding_time(&model, 0, u, &mut rng)))
    });

    let (model, u, t) = birth_death();
    let cfg = SimulationConfig {
        n_paths: 1_000,
        seed: 5,
        ..SimulationConfig::point_mass(0, model.n_total(), u, t)
    };
    c.bench_function("sampling/1k-paths", |b| {
        b.iter(|| simulator::simulate_paths(&model, &cfg).unwrap())
    });
}

criterion_group!(benches, bench_routes, bench_sampling);
criterion_main!(benches);
