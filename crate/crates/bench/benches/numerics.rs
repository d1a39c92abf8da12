use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gpsysid_bench::spd;
use gpsysid_core::numerics::{cholesky_default, expm};
use gpsysid_core::Matrix;

fn cholesky(c: &mut Criterion) {
    let mut group = c.benchmark_group("cholesky");
    for n in [50, 200, 500] {
        let a = spd(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| cholesky_default(black_box(a)).unwrap())
        });
        let factor = cholesky_default(&a).unwrap();
        group.bench_with_input(BenchmarkId::new("inverse", n), &factor, |b, f| b.iter(|| f.inverse()));
    }
    group.finish();
}

fn matrix_exponential(c: &mut Criterion) {
    // Companion matrix of the Matérn-5/2 state-space model at λ = √5.
    let l = 5f64.sqrt();
    let f = Matrix::from_fn(3, 3, |i, j| match (i, j) {
        (0, 1) | (1, 2) => 1.0,
        (2, 0) => -l * l * l,
        (2, 1) => -3.0 * l * l,
        (2, 2) => -3.0 * l,
        _ => 0.0,
    });
    c.bench_function("expm/3x3", |b| b.iter(|| expm(black_box(&f)).unwrap()));
    let big = Matrix::from_fn(12, 12, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5);
    c.bench_function("expm/12x12", |b| b.iter(|| expm(black_box(&big)).unwrap()));
}

criterion_group!(benches, cholesky, matrix_exponential);
criterion_main!(benches);
