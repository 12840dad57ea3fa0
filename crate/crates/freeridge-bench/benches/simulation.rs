use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use freeridge::montecarlo::crossed_variance_components;
use freeridge::McPlan;
use freeridge_bench::lrf_model;

fn bench_crossed_grid(c: &mut Criterion) {
    let plan = McPlan {
        model: lrf_model(200, 100),
        n_data_seeds: 4,
        n_feature_seeds: 4,
        n_test: 1,
        base_seed: 0,
    };
    let mut group = c.benchmark_group("montecarlo");
    group.sample_size(10);
    group.bench_function("crossed_4x4_d200", |b| {
        b.iter(|| crossed_variance_components(black_box(&plan)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_crossed_grid);
criterion_main!(benches);
