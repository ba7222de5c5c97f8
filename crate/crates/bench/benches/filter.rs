use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use arhmm::{e_step, filter_path};
use arhmm_bench::{sample, sp500_arhmm};

fn filtering(c: &mut Criterion) {
    let model = sp500_arhmm();
    let mut g = c.benchmark_group("filter");
    for n in [1_000, 10_000] {
        let y = sample(&model, n, 3);
        g.throughput(Throughput::Elements(n as u64));
        g.bench_with_input(BenchmarkId::new("filter_path", n), &y, |b, y| {
            b.iter(|| filter_path(&model, y).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("e_step", n), &y, |b, y| {
            b.iter(|| e_step(&model, y).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, filtering);
criterion_main!(benches);
