use std::hint::black_box;

use beliefsim::exec::{Execution, RngStream};
use beliefsim::fixtures;
use beliefsim::samplers::{likelihood_weighting_estimate, rejection_estimate};
use beliefsim::Assignment;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const N: usize = 1 << 18;

fn forward_schemes(c: &mut Criterion) {
    let net = fixtures::fig3_2_like();
    let ev = Assignment::parse(&net, fixtures::FIG3_2_EVIDENCE).unwrap();
    let queries: Vec<_> = net.ids().filter(|&v| !ev.contains(v)).collect();
    let stream = RngStream::new(7);

    let mut g = c.benchmark_group("forward");
    g.sample_size(10);
    g.throughput(Throughput::Elements(N as u64));
    for (label, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        g.bench_with_input(BenchmarkId::new("rejection", label), &exec, |b, &exec| {
            b.iter(|| black_box(rejection_estimate(&net, &ev, &queries, N, &stream, exec).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("lw", label), &exec, |b, &exec| {
            b.iter(|| {
                black_box(likelihood_weighting_estimate(&net, &ev, &queries, N, &stream, exec).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, forward_schemes);
criterion_main!(benches);
