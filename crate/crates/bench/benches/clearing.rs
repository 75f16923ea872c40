use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use twosettle::{run_oracle, run_std, solve_bid, solve_dam, solve_rtm_all, BidVector, RunConfig};
use twosettle_bench::instances;

fn markets(c: &mut Criterion) {
    let config = RunConfig::default();
    let mut group = c.benchmark_group("markets");
    group.sample_size(20);
    for inst in instances() {
        let bids = BidVector(inst.scenarios.expected_vres());
        group.bench_with_input(BenchmarkId::new("dam", &inst.name), &inst, |b, i| {
            b.iter(|| solve_dam(&i.system, &i.scenarios, black_box(&bids), config.solver_tolerance).unwrap())
        });
        let da = solve_dam(&inst.system, &inst.scenarios, &bids, config.solver_tolerance).unwrap();
        group.bench_with_input(BenchmarkId::new("rtm_all", &inst.name), &inst, |b, i| {
            b.iter(|| solve_rtm_all(&i.system, &i.scenarios, black_box(&da), &config).unwrap())
        });
    }
    group.finish();
}

fn bidding(c: &mut Criterion) {
    let config = RunConfig::default();
    let mut group = c.benchmark_group("bidding");
    group.sample_size(10);
    for inst in instances() {
        group.bench_with_input(BenchmarkId::new("bid", &inst.name), &inst, |b, i| {
            b.iter(|| solve_bid(&i.system, &i.scenarios, &config).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("std", &inst.name), &inst, |b, i| {
            b.iter(|| run_std(&i.system, &i.scenarios, &config).unwrap())
        });
    }
    let two_bus = &instances()[0];
    group.bench_function("oracle/two_bus", |b| {
        b.iter(|| run_oracle(&two_bus.system, &two_bus.scenarios, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, markets, bidding);
criterion_main!(benches);
