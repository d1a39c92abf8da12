use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gpsysid_bench::{matern32, matern_series};
use gpsysid_core::temporal::kalman_regress;
use gpsysid_core::{Dataset, Matrix, MeanFunction, TrainedGP};

/// Kalman/RTS regression against the exact Cholesky path on the same data.
fn temporal_vs_exact(c: &mut Criterion) {
    let kernel = matern32();
    let mut group = c.benchmark_group("regression");
    group.sample_size(10);
    for n in [250, 500, 1000, 2000] {
        let s = matern_series(n, 1);
        let test: Vec<f64> = s.t.iter().step_by(10).copied().collect();
        group.bench_with_input(BenchmarkId::new("kalman", n), &n, |b, _| {
            b.iter(|| kalman_regress(&kernel, black_box(&s.t), &s.y, 0.01, &test).unwrap())
        });
        if n <= 1000 {
            group.bench_with_input(BenchmarkId::new("exact", n), &n, |b, _| {
                b.iter(|| {
                    let data = Dataset::new(Matrix::column(black_box(&s.t)), s.y.clone(), 0.01).unwrap();
                    let gp = TrainedGP::fit(&data, kernel, MeanFunction::default()).unwrap();
                    gp.predict(&Matrix::column(&test), false).unwrap()
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, temporal_vs_exact);
criterion_main!(benches);
