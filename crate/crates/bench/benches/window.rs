use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use renpop_core::stats::{mtp_balance, palm_split, ParentEdge};
use renpop_core::{build_forest, burn_in, original_ancestors, population_process, MarkDistribution, MarkWindow, SeedSpec};

const SIZES: [i64; 2] = [100_000, 1_000_000];

fn pipeline(c: &mut Criterion) {
    let d = MarkDistribution::geometric(0.5).unwrap();
    let b = burn_in(&d, 1e-9);
    let mut g = c.benchmark_group("geometric_0.5");
    g.sample_size(10);
    for n in SIZES {
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("simulate", n), &n, |bench, &n| {
            bench.iter(|| MarkWindow::simulate(&d, SeedSpec::new(1), 0, black_box(n) - 1).unwrap())
        });
        let w = MarkWindow::simulate(&d, SeedSpec::new(1), 0, n - 1).unwrap();
        g.bench_with_input(BenchmarkId::new("population", n), &w, |bench, w| {
            bench.iter(|| population_process(w.clone(), b))
        });
        let t = population_process(w, b);
        let anc = original_ancestors(&t).unwrap();
        g.bench_with_input(BenchmarkId::new("forest", n), &t, |bench, t| bench.iter(|| build_forest(t, &anc)));
        let f = build_forest(&t, &anc);
        g.bench_with_input(BenchmarkId::new("palm_split", n), &f, |bench, f| {
            bench.iter(|| palm_split(f, 2).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("transport_parent_edge", n), &f, |bench, f| {
            bench.iter(|| mtp_balance(f, &ParentEdge).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
