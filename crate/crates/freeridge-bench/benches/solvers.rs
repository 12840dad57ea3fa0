use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use freeridge::free_transforms::{spectral_density, EnsembleTransform};
use freeridge::renormalizer::solve_lrf;
use freeridge::risk::lrf_risk;
use freeridge_bench::lrf_model;

fn bench_solve_lrf(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_lrf");
    for dim in [100usize, 1000, 10_000] {
        let model = lrf_model(dim, dim / 2);
        group.bench_with_input(BenchmarkId::from_parameter(dim), &model, |b, m| {
            b.iter(|| solve_lrf(black_box(m)).unwrap())
        });
    }
    group.finish();
}

fn bench_lrf_risk(c: &mut Criterion) {
    let model = lrf_model(1000, 500);
    let state = solve_lrf(&model).unwrap();
    c.bench_function("lrf_risk_d1000", |b| {
        b.iter(|| lrf_risk(black_box(&model), black_box(&state)).unwrap())
    });
}

fn bench_spectral_density(c: &mut Criterion) {
    let ensemble = EnsembleTransform::DeepWhiteGram { widths: vec![1000, 6000], d: 200 };
    let grid: Vec<f64> = (0..200).map(|i| 1.0 + 0.5 * i as f64).collect();
    c.bench_function("spectral_density_deep_gram_200pts", |b| {
        b.iter(|| spectral_density(black_box(&ensemble), black_box(&grid), 1e-4).unwrap())
    });
}

criterion_group!(benches, bench_solve_lrf, bench_lrf_risk, bench_spectral_density);
criterion_main!(benches);
