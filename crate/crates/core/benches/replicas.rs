//! Replica loops run sequentially and on the rayon pool.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use treewalk::environment::EnvironmentLaw;
use treewalk::genealogy::{Constraint, Partition, IncreasingCollection};
use treewalk::par::Execution;
use treewalk::theory::{collect_samples, estimate_esp_partition, DeskConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn c_infinity(c: &mut Criterion) {
    let law = EnvironmentLaw::reference();
    let mut group = c.benchmark_group("c_infinity");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| law.estimate_c_infinity(500, 2_000, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn esp_partition(c: &mut Criterion) {
    let law = Arc::new(EnvironmentLaw::reference());
    let pi = IncreasingCollection::new(vec![Partition::one_block(2), Partition::singletons(2)]).unwrap();
    let mut group = c.benchmark_group("esp_partition");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_esp_partition(&law, &[3], &pi, 2_000, 1, exec).unwrap())
        });
    }
    group.finish();
}

fn desk_samples(c: &mut Criterion) {
    let law = Arc::new(EnvironmentLaw::reference());
    let mut group = c.benchmark_group("desk_samples");
    group.sample_size(10);
    for (name, exec) in MODES {
        let cfg = DeskConfig { replicas: 16, exec, ..DeskConfig::default() };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| collect_samples(&law, &[10_000], 2, &Constraint::f_m(3), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, c_infinity, esp_partition, desk_samples);
criterion_main!(benches);
