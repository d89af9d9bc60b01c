//! Each kernel runs once inside a single-thread rayon pool and once inside
//! the default pool. Built without the `parallel` feature, both variants take
//! the sequential path and should time the same.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hke_core::dataset::generate_blobs;
use hke_core::embedding::{embed_all, train, AnsweredTriplet, EmbeddingModel, Embeddings, TrainConfig};
use hke_core::hierarchy::{build_hierarchy, choose_k, HierarchyConfig};
use hke_core::participants::{participant_tree, standard_participants};
use hke_core::elicitation::random_questions;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let build = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    vec![("sequential", build(1)), ("parallel", build(0))]
}

fn kernels(c: &mut Criterion) {
    let dataset = generate_blobs(&participant_tree(1).unwrap(), 100, 32, 0).unwrap();
    let mut participant = standard_participants(&dataset, 0.0, 0).unwrap().remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let questions = random_questions(&dataset.ids(), 500, &Default::default(), 20, &mut rng).unwrap();
    let triplets: Vec<AnsweredTriplet> = questions
        .iter()
        .map(|q| {
            let n = participant.answer(q).unwrap();
            let mut pos = q.ids().into_iter().filter(|&i| i != n);
            AnsweredTriplet::new(pos.next().unwrap(), pos.next().unwrap(), n, 0.4).unwrap()
        })
        .collect();
    let model = EmbeddingModel::for_dataset(&dataset, &[64], 8, 0).unwrap();
    let embeddings = embed_all(&model, &dataset).unwrap();
    let raw = Embeddings::from_features(&dataset);
    let config = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };

    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("embed_all", name), |b| {
            b.iter(|| pool.install(|| embed_all(&model, &dataset).unwrap()))
        });
        group.bench_function(BenchmarkId::new("train_epoch", name), |b| {
            b.iter(|| {
                let mut m = model.clone();
                pool.install(|| train(&mut m, &triplets, &dataset, &config).unwrap())
            })
        });
        group.bench_function(BenchmarkId::new("choose_k", name), |b| {
            b.iter(|| pool.install(|| choose_k(&raw.vectors, 2, 5, 0).unwrap()))
        });
        group.bench_function(BenchmarkId::new("build_hierarchy", name), |b| {
            b.iter(|| pool.install(|| build_hierarchy(&embeddings, &HierarchyConfig::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
