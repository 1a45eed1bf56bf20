use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scenery_core::flow::{center, CenterInput};
use scenery_core::metric::distribution_distance_with;
use scenery_core::oracle::random_measure;
use scenery_core::par::stream_rng;
use scenery_core::{DyadicMeasure, EmpiricalDistribution, Exec};

fn distances(c: &mut Criterion) {
    let mut group = c.benchmark_group("distribution_distance");
    group.sample_size(10);
    for atoms in [40usize, 120] {
        let make = |seed: u64| {
            let mut rng = stream_rng(seed, 0);
            let ms: Vec<DyadicMeasure> = (0..atoms).map(|_| random_measure(&mut rng, 1, 8)).collect();
            EmpiricalDistribution::uniform(ms, 4).unwrap()
        };
        let (a, b) = (make(1), make(2));
        for exec in [Exec::Sequential, Exec::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{exec:?}"), atoms), &atoms, |bench, _| {
                bench.iter(|| distribution_distance_with(black_box(&a), black_box(&b), 4, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn centering(c: &mut Criterion) {
    let mut group = c.benchmark_group("center");
    group.sample_size(10);
    let q = EmpiricalDistribution::dirac(DyadicMeasure::lebesgue(2, 9).unwrap(), 4).unwrap();
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_function(format!("{exec:?}"), |bench| {
            bench.iter(|| center(CenterInput::Adapted(black_box(&q)), 3, 4000, 7, 4, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, distances, centering);
criterion_main!(benches);
