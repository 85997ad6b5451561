use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;
use std::hint::black_box;

use codectrace::corpus::SEGMENT_LEN;
use codectrace::metrics::{compute_eer, weighted_f1};
use codectrace::model::{ConfigName, Labels, Model, TrainSetup};
use codectrace::scoring::fuse_bonafide;
use codectrace::seed;

fn metrics(c: &mut Criterion) {
    let mut rng = seed::rng(1);
    let n = 10_000;
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    let scores: Vec<f64> = labels
        .iter()
        .map(|&b| rng.random_range(0.0..1.0) + if b { 0.4 } else { 0.0 })
        .collect();
    c.bench_function("eer_10k", |b| b.iter(|| compute_eer(black_box(&scores), black_box(&labels)).unwrap()));

    let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let preds: Vec<usize> = truth
        .iter()
        .map(|&t| if rng.random_bool(0.8) { t } else { rng.random_range(0..4) })
        .collect();
    c.bench_function("weighted_f1_10k", |b| {
        b.iter(|| weighted_f1(black_box(&preds), black_box(&truth), 4).unwrap())
    });

    let triples: Vec<[f64; 3]> = (0..1000)
        .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
        .collect();
    c.bench_function("fusion_1k", |b| {
        b.iter(|| triples.iter().map(|t| fuse_bonafide(black_box(t))).sum::<f64>())
    });
}

fn model(c: &mut Criterion) {
    let mut rng = seed::rng(2);
    let x: Vec<f64> = (0..SEGMENT_LEN).map(|_| rng.random_range(-0.5..0.5)).collect();
    let setup = TrainSetup::new(ConfigName::M2);
    let model = Model::new(&setup).unwrap();

    let mut group = c.benchmark_group("model");
    group.sample_size(20);
    group.bench_function("forward_segment", |b| b.iter(|| model.forward(black_box(&x), &setup)));
    group.bench_function("batch8_loss_and_gradients", |b| {
        b.iter_batched(
            || {
                (0..8)
                    .map(|i| (x.clone(), Labels::from([1, 1 + i % 3, 1 + i % 3, 1 + i % 2])))
                    .collect::<Vec<_>>()
            },
            |batch| {
                let refs: Vec<(&[f64], Labels)> = batch.iter().map(|(s, l)| (s.as_slice(), l.clone())).collect();
                model.loss_and_gradients(&refs, &setup).unwrap()
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, metrics, model);
criterion_main!(benches);
