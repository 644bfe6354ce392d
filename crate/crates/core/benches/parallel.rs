//! Parallel versus sequential execution of the data-parallel hot paths.

use chrono::{Duration, TimeZone, Utc};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flowcast::data::{assemble_windows, fit_norm_stats, generate_synthetic_catchments, SplitSpec, WindowSample};
use flowcast::metrics::{per_station_summary, ForecastArchive};
use flowcast::models::{build_network, evaluate_mae, ArchSpec, Architecture};
use flowcast::par::Exec;
use flowcast::HORIZON;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples() -> Vec<WindowSample> {
    let (metas, series) = generate_synthetic_catchments(4, 3000, 1).unwrap();
    let span = series[0].span();
    let split = SplitSpec {
        train: span,
        val: span,
        test: span,
    };
    let stats = fit_norm_stats(&series, &metas, &split).unwrap();
    metas
        .iter()
        .zip(&series)
        .flat_map(|(m, s)| assemble_windows(s, m, &stats, span, 64).unwrap().into_iter().take(16))
        .collect()
}

fn bench_forward(c: &mut Criterion) {
    let data = samples();
    let mut group = c.benchmark_group("evaluate_mae");
    group.sample_size(10);
    for arch in [Architecture::Gru, Architecture::Transformer] {
        let net = build_network(&ArchSpec::new(arch, 1)).unwrap();
        for (name, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
            group.bench_with_input(BenchmarkId::new(arch.tag(), name), &exec, |b, &exec| {
                b.iter(|| evaluate_mae(&*net, &data, 8, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_scores(c: &mut Criterion) {
    let models = [Architecture::Persistence, Architecture::Gru];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t0 = Utc.with_ymd_and_hms(2013, 10, 1, 0, 0, 0).unwrap();
    let mut archive = ForecastArchive::new();
    for s in 0..16 {
        let times: Vec<_> = (0..200).map(|a| t0 + Duration::hours(a * 7)).collect();
        let observed: Vec<f64> = (0..200 * HORIZON).map(|_| rng.random_range(1.0..100.0)).collect();
        for &m in &models {
            let predicted = observed.iter().map(|o| o * rng.random_range(0.8..1.2)).collect();
            archive
                .insert(&format!("st{s:02}"), m, times.clone(), observed.clone(), predicted)
                .unwrap();
        }
    }
    let mut group = c.benchmark_group("per_station_summary");
    for (name, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
        group.bench_function(name, |b| b.iter(|| per_station_summary(&archive, &models, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_forward, bench_scores);
criterion_main!(benches);
