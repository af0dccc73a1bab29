use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use momtour_core::norms::slope_weights;
use momtour_core::datagen::{generate, Dataset, Design, Noise, ScenarioSpec, SupportRule, TruthSpec};
use momtour_core::{
    build_pool, lasso_cd, median_of_block_means, partition_blocks, run_tournament, sorted_l1_prox,
    Penalty, ProcedureConstants, SolverConfig, TournamentConfig,
};

fn dataset(d: usize, n: usize) -> Dataset {
    generate(&ScenarioSpec {
        d,
        n_per_fold: n,
        design: Design::Gaussian,
        noise: Noise::StudentT { nu: 3.0, sigma: 1.0 },
        truth: TruthSpec {
            sparsity: 3,
            support: SupportRule::Random,
            magnitude: 1.0,
            perturbation: 0.0,
        },
        extra_folds: 0,
        seed: 7,
    })
    .unwrap()
}

fn mom(c: &mut Criterion) {
    let values: Vec<f64> = (0..100_000).map(|i| ((i * 7919) % 1000) as f64).collect();
    let mut group = c.benchmark_group("median_of_block_means");
    for blocks in [10usize, 100, 1000] {
        let partition = partition_blocks(values.len(), blocks).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(blocks), &partition, |b, p| {
            b.iter(|| median_of_block_means(black_box(&values), p).unwrap())
        });
    }
    group.finish();
}

fn solvers(c: &mut Criterion) {
    let ds = dataset(64, 1500);
    let fold = ds.data.fold2();
    let config = SolverConfig::default();
    c.bench_function("lasso_cd d=64 n=1500", |b| {
        b.iter(|| lasso_cd(fold.x.view(), &fold.y, black_box(0.1), &config).unwrap())
    });

    let weights = slope_weights(1000, 1.0);
    let z: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 25.0 - 2.0).collect();
    c.bench_function("sorted_l1_prox d=1000", |b| {
        b.iter(|| sorted_l1_prox(black_box(&z), &weights, 0.5).unwrap())
    });
}

fn tournament(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_tournament");
    group.sample_size(10);
    for n in [500usize, 1500] {
        let ds = dataset(64, n);
        let unit = ((1.0 + 64f64.ln()) / n as f64).sqrt();
        let solver = SolverConfig {
            lambda_grid: [8.0, 4.0, 2.0, 1.0, 0.5, 0.25].iter().map(|g| g * unit).collect(),
            ..SolverConfig::default()
        };
        let pool = build_pool(ds.data.fold2(), Penalty::Lasso, &solver, None, 7).unwrap();
        let config = TournamentConfig::new(Penalty::Lasso, ProcedureConstants::default());
        group.bench_with_input(BenchmarkId::new("lasso d=64", n), &pool, |b, pool| {
            b.iter(|| run_tournament(pool, &ds.data, &config).ok())
        });
    }
    group.finish();
}

criterion_group!(benches, mom, solvers, tournament);
criterion_main!(benches);
