use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use lane3d_core::throughput::Workload;
use lane3d_core::{Execution, RunConfig};

const FRAMES: usize = 64;

fn forward_evaluate(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let workload = Workload::synthetic(&cfg, 16, 0).expect("synthetic workload");
    let mut group = c.benchmark_group("forward_evaluate");
    group.throughput(Throughput::Elements(FRAMES as u64));
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, FRAMES), &exec, |b, &exec| {
            b.iter(|| workload.run(FRAMES, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_evaluate);
criterion_main!(benches);
