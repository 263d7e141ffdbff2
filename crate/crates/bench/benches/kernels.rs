use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cvxattn_bench::{dataset, model};
use cvxattn_core::model::serialize;
use cvxattn_core::{
    nuclear_ball_project, predict, simplex_project, train, Mat, Precision, Preset, RngStream,
    TrainConfig,
};

fn simplex(c: &mut Criterion) {
    let mut group = c.benchmark_group("simplex_project");
    let mut rng = RngStream::new(1);
    for p in [10usize, 30, 100] {
        let s: Vec<f64> = (0..p).map(|_| rng.next_normal()).collect();
        group.bench_with_input(BenchmarkId::from_parameter(p), &s, |b, s| {
            b.iter(|| simplex_project(black_box(s)).unwrap())
        });
    }
    group.finish();
}

fn nuclear(c: &mut Criterion) {
    let mut group = c.benchmark_group("nuclear_ball_project");
    let mut rng = RngStream::new(2);
    // (K*P) x m reshapes of the preset weight tensors.
    for (rows, cols) in [(40usize, 3usize), (40, 9), (120, 3)] {
        let a = Mat::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.next_normal()).collect(),
        )
        .unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{rows}x{cols}")),
            &a,
            |b, a| b.iter(|| nuclear_ball_project(black_box(a), 5.0).unwrap()),
        );
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("predict");
    for preset in [Preset::TapAppxB, Preset::SwipeAppxB] {
        let ds = dataset(preset);
        let bundle = model(preset, &ds);
        let x = &ds.samples[0].x;
        group.bench_function(preset.name(), |b| {
            b.iter(|| predict(black_box(x), &bundle).unwrap())
        });
    }
    group.finish();

    let ds = dataset(Preset::TapAppxB);
    let bundle = model(Preset::TapAppxB, &ds);
    c.bench_function("serialize_f32", |b| {
        b.iter(|| serialize(black_box(&bundle), Precision::F32).unwrap())
    });
}

fn training_epoch(c: &mut Criterion) {
    let mut group = c.benchmark_group("train_one_epoch");
    group.sample_size(10);
    for preset in [Preset::TapAppxB, Preset::SwipeAppxB] {
        let ds = dataset(preset);
        let cfg = TrainConfig {
            epochs: 1,
            ..preset.config()
        };
        group.bench_function(preset.name(), |b| {
            b.iter(|| train(black_box(&ds), &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, simplex, nuclear, inference, training_epoch);
criterion_main!(benches);
