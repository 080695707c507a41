use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hdt_core::batch::run_batch_sequential;
use hdt_core::scenario;
use hdt_core::sim::{self, ScenarioSpec};

fn sweep(n: usize) -> Vec<ScenarioSpec> {
    (0..n)
        .map(|k| {
            let factor = 0.9 + 0.2 * k as f64 / n.max(2) as f64;
            let mut spec = scenario::voltage_regulation(factor);
            spec.duration = 0.15;
            spec
        })
        .collect()
}

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for n in [4usize, 16] {
        let specs = sweep(n);
        group.bench_with_input(BenchmarkId::new("sequential", n), &specs, |b, s| {
            b.iter(|| run_batch_sequential(s))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", n), &specs, |b, s| {
            b.iter(|| hdt_core::batch::run_batch_parallel(s))
        });
    }
    group.finish();
}

fn single_run(c: &mut Criterion) {
    let spec = scenario::preset("phase_balancing").unwrap();
    c.bench_function("single_run_phase_balancing_0.2s", |b| b.iter(|| sim::run(&spec).unwrap()));
}

criterion_group!(benches, batch, single_run);
criterion_main!(benches);
