use criterion::{black_box, criterion_group, criterion_main, Criterion};

use arhmm::hedge::{
    build_tables, run_strategy, simulate_market_paths, truncated_gaussian_moments, Hedger,
    RegimePolicy,
};
use arhmm_bench::{atm_call, sp500_arhmm};

fn moments(c: &mut Criterion) {
    c.bench_function("truncated_gaussian_moments", |b| {
        b.iter(|| {
            truncated_gaussian_moments(black_box(1.0), 0.0004, 0.012, black_box(-0.01), 0.02)
                .unwrap()
        })
    });
}

fn tables(c: &mut Criterion) {
    let model = sp500_arhmm();
    let mut g = c.benchmark_group("hedge");
    g.sample_size(10);
    let small = atm_call(&model, 10, 21, 41);
    g.bench_function("build_tables_10_steps_21x41", |b| {
        b.iter(|| build_tables(&model, &small).unwrap())
    });

    let tables = build_tables(&model, &small).unwrap();
    let paths = simulate_market_paths(&model, 10, 1_000, 100, 9).unwrap();
    let hedger = Hedger::Optimal {
        tables: &tables,
        filter_model: &model,
        policy: RegimePolicy::MostProbable,
    };
    g.bench_function("hedge_1000_paths_10_steps", |b| {
        b.iter(|| run_strategy(&hedger, &paths, 100.0).unwrap())
    });
    g.finish();
}

criterion_group!(benches, moments, tables);
criterion_main!(benches);
