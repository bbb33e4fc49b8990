use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use std::hint::black_box;

use netcrf::graph::DEFAULT_RADIUS;
use netcrf::{
    build_design, build_geometric_network, dgp_scenario, fit, generate_positions, run_replication, simulate_frame,
    MCConfig, ModelSpec, Scenario,
};

fn geometric_graph(c: &mut Criterion) {
    let mut group = c.benchmark_group("geometric_graph");
    for n in [1000usize, 2000, 5000] {
        let positions = generate_positions(n, 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &positions, |b, p| {
            b.iter(|| build_geometric_network(black_box(p), DEFAULT_RADIUS).unwrap())
        });
    }
    group.finish();
}

fn estimators(c: &mut Criterion) {
    let positions = generate_positions(2000, 2).unwrap();
    let network = build_geometric_network(&positions, DEFAULT_RADIUS).unwrap();
    let frame = simulate_frame(&network, &dgp_scenario(Scenario::IV), 3, false).unwrap().frame;
    let y = frame.y();

    let mut group = c.benchmark_group("fit");
    let specs = [
        ModelSpec::TModel,
        ModelSpec::TrModel,
        ModelSpec::CRF2_QUADRATIC,
        ModelSpec::Crf1Long { f_max: 20, t_max: 20 },
    ];
    for spec in specs {
        group.bench_function(spec.to_string(), |b| {
            b.iter_batched(
                || build_design(&frame, &spec).unwrap(),
                |x| fit(&x, black_box(&y), spec.default_rank_policy()).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn replication(c: &mut Criterion) {
    let config = MCConfig::standard(2000, Scenario::IV, 1, 7);
    c.bench_function("replication_n2000_four_estimators", |b| {
        b.iter(|| run_replication(black_box(&config), 0).unwrap())
    });
}

criterion_group!(benches, geometric_graph, estimators, replication);
criterion_main!(benches);
