use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gareg_bench::{brute_nearest, random_cloud};
use gareg_core::synth::{make_pair, PairSpec};
use gareg_core::{
    evaluate_motion, register, EulerAngles, FitnessKind, RegistrationConfig, RigidMotion,
    SearchMode, SpatialIndex,
};

fn nearest(c: &mut Criterion) {
    let mut group = c.benchmark_group("nearest");
    for n in [1_000, 10_000] {
        let cloud = random_cloud(n, 1);
        let queries = random_cloud(500, 2);
        let index = SpatialIndex::build(&cloud).unwrap();
        group.bench_with_input(BenchmarkId::new("kdtree", n), &n, |b, _| {
            b.iter(|| {
                for q in queries.iter() {
                    black_box(index.nearest(q));
                }
            })
        });
        group.bench_with_input(BenchmarkId::new("brute", n), &n, |b, _| {
            b.iter(|| {
                for q in queries.iter() {
                    black_box(brute_nearest(&cloud, q));
                }
            })
        });
    }
    group.finish();
}

fn build_index(c: &mut Criterion) {
    let cloud = random_cloud(10_000, 3);
    c.bench_function("build_index_10k", |b| b.iter(|| SpatialIndex::build(black_box(&cloud)).unwrap()));
}

fn fitness(c: &mut Criterion) {
    let source = random_cloud(2_000, 4);
    let target = random_cloud(2_000, 5);
    let index = SpatialIndex::build(&target).unwrap();
    let motion = RigidMotion::new(EulerAngles::new(3.0, -2.0, 10.0), [1.0, 2.0, 3.0].into());
    let mut group = c.benchmark_group("fitness_2k");
    for kind in [FitnessKind::MeanDistance, FitnessKind::MedianDistance] {
        group.bench_function(format!("{kind:?}"), |b| {
            b.iter(|| evaluate_motion(&motion, &source, &index, kind, 1.0).unwrap())
        });
    }
    group.finish();
}

fn short_registration(c: &mut Criterion) {
    let pair = make_pair(&PairSpec::benchmark(0).unwrap()).unwrap();
    let mut config = RegistrationConfig::default();
    config.downsample = 500;
    config.ga.coarse_generations = 20;
    config.ga.fine_generations = 20;
    let mut group = c.benchmark_group("register_short");
    group.sample_size(10);
    group.bench_function("reduced", |b| {
        let mode = SearchMode::ReducedTranslationOnly(pair.ground_truth.rotation);
        b.iter(|| register(&pair.source, &pair.target, mode, &config).unwrap())
    });
    group.bench_function("full", |b| {
        b.iter(|| register(&pair.source, &pair.target, SearchMode::Full6Dof, &config).unwrap())
    });
    group.finish();
}

criterion_group!(benches, nearest, build_index, fitness, short_registration);
criterion_main!(benches);
