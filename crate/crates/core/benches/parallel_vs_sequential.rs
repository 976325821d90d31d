use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lvmrs::engine::{select_map, temperature_grid, GridConfig, TemperatureScale};
use lvmrs::exec::with_sequential;
use lvmrs::models::{LinearModel, SyntheticModel};
use lvmrs::noise::{NoiseSeed, STREAM_VALIDATION};
use lvmrs::{estimate_phat, sample_scores, MapKind, MapSpec, ScoreMatrix};

fn model() -> SyntheticModel {
    let w = (0..10)
        .map(|k| {
            (0..32)
                .map(|j| ((k * 31 + j * 7) % 13) as f64 / 13.0 - 0.5)
                .collect()
        })
        .collect();
    SyntheticModel::LinearMulticlass(LinearModel::new(w, vec![0.0; 10]).unwrap())
}

fn scores(n: usize) -> ScoreMatrix {
    sample_scores(
        &model(),
        &[0.1; 32],
        n,
        0.5,
        NoiseSeed::new(1, 0, STREAM_VALIDATION),
    )
    .unwrap()
}

fn bench_sampling(c: &mut Criterion) {
    let m = model();
    let x = [0.1; 32];
    let seed = NoiseSeed::new(1, 0, STREAM_VALIDATION);
    let mut g = c.benchmark_group("sample_scores");
    for n in [10_000, 100_000] {
        g.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, &n| {
            b.iter(|| sample_scores(&m, &x, n, 0.5, seed).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| with_sequential(|| sample_scores(&m, &x, n, 0.5, seed).unwrap()))
        });
    }
    g.finish();
}

fn bench_estimate(c: &mut Criterion) {
    let s = scores(100_000);
    let spec = MapSpec::new(MapKind::Sparsemax, 0.5, 1.0).unwrap();
    let mut g = c.benchmark_group("estimate_phat");
    g.bench_function("parallel", |b| b.iter(|| estimate_phat(&s, &spec).unwrap()));
    g.bench_function("sequential", |b| {
        b.iter(|| with_sequential(|| estimate_phat(&s, &spec).unwrap()))
    });
    g.finish();
}

fn bench_selection(c: &mut Criterion) {
    let s = scores(10_000);
    let mut grid = GridConfig::new(0.5, 10_000, 10_000).unwrap();
    grid.temperatures = temperature_grid(0.01, 50.0, 20, TemperatureScale::Log).unwrap();
    let mut g = c.benchmark_group("select_map");
    g.sample_size(20);
    g.bench_function("parallel", |b| b.iter(|| select_map(&s, &grid).unwrap()));
    g.bench_function("sequential", |b| {
        b.iter(|| with_sequential(|| select_map(&s, &grid).unwrap()))
    });
    g.finish();
}

criterion_group!(benches, bench_sampling, bench_estimate, bench_selection);
criterion_main!(benches);
