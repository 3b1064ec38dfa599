use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dpcov::moments::DEFAULT_NODES;
use dpcov::{
    correlation_spectrum, covariance_spectrum, critical_value, moment_table, run_test, run_test_spectrum, Kappa,
    MarchenkoPastur, MomentCache, NoiseLaw,
};
use dpcov_bench::{config, null_data};
use nalgebra::Matrix3;
use std::hint::black_box;

fn spectra(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectrum");
    for (n, d) in [(400, 200), (800, 400), (200, 400)] {
        let x = null_data(n, d, 1);
        group.bench_with_input(BenchmarkId::new("covariance", format!("{n}x{d}")), &x, |b, x| {
            b.iter(|| covariance_spectrum(black_box(x), false))
        });
        group.bench_with_input(BenchmarkId::new("correlation", format!("{n}x{d}")), &x, |b, x| {
            b.iter(|| correlation_spectrum(black_box(x)))
        });
    }
    group.finish();
}

fn moments(c: &mut Criterion) {
    let mut group = c.benchmark_group("moment_table");
    for y in [0.5, 2.0] {
        let mp = MarchenkoPastur::new(y).unwrap();
        let noise = NoiseLaw::new(1.0).unwrap();
        group.bench_function(format!("y={y}"), |b| {
            b.iter(|| moment_table(&mp, noise, Kappa::Null, black_box(DEFAULT_NODES)).unwrap())
        });
    }
    group.finish();
}

fn calibration(c: &mut Criterion) {
    let r = Matrix3::new(1.0, 0.5, 0.5, 0.5, 1.0, 0.9, 0.5, 0.9, 1.0);
    let mut group = c.benchmark_group("critical_value");
    group.sample_size(10);
    for samples in [100_000, 1_000_000] {
        group.bench_with_input(BenchmarkId::from_parameter(samples), &samples, |b, &s| {
            b.iter(|| critical_value(&r, 0.05, s, 1).unwrap())
        });
    }
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let x = null_data(400, 200, 2);
    let cfg = config(2.0, 100_000);
    let mut group = c.benchmark_group("run_test");
    group.sample_size(10);
    group.bench_function("400x200 cold", |b| b.iter(|| run_test(black_box(&x), &cfg).unwrap()));
    let spectrum = covariance_spectrum(&x, false);
    let cache = MomentCache::new();
    group.bench_function("400x200 cached tables", |b| {
        b.iter(|| run_test_spectrum(black_box(&spectrum), &cfg, Some(&cache)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, spectra, moments, calibration, end_to_end);
criterion_main!(benches);
