//! Multi-seed runs with the rayon seed pool versus a plain sequential loop.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fairalloc::experiment::{run_seeds, InstanceSpec, RunConfig};
use fairalloc::parallel::ExecMode;

fn seeds(c: &mut Criterion) {
    let cfg = RunConfig::new(InstanceSpec::default(), 20_000, 8);
    let instance = cfg.instance.build(std::path::Path::new(".")).unwrap();
    let mut group = c.benchmark_group("seeds");
    group.sample_size(10);
    for (name, mode) in [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, cfg.seeds), &mode, |b, &mode| {
            b.iter(|| black_box(run_seeds(&instance, &cfg, mode).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, seeds);
criterion_main!(benches);
