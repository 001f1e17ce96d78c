use criterion::{criterion_group, criterion_main, Criterion};

use mgsim_core::{parse_scenario, run_simulation};

fn default_scenario(c: &mut Criterion) {
    let sc = parse_scenario("duration = 35").unwrap();
    let mut group = c.benchmark_group("scenario");
    group.sample_size(10);
    group.bench_function("default/35s", |b| b.iter(|| run_simulation(&sc).unwrap()));
    group.finish();
}

criterion_group!(benches, default_scenario);
criterion_main!(benches);
