//! Rayon vs sequential throughput on the data-parallel cores: episode
//! generation, minibatch gradient computation, and validation scoring.
//!
//! Both paths produce bit-identical results; this suite only measures the
//! speedup. `RAYON_NUM_THREADS` controls the pool.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use beamsim_core::config::Config;
use beamsim_core::datagen::{episode_for, generate_dataset, Dataset};
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::train::{batch_gradients, validation_loss};
use beamsim_core::predictor::BeamPredictor;

fn modes() -> Vec<(&'static str, ExecMode)> {
    vec![("sequential", ExecMode::Sequential), ("parallel", ExecMode::default())]
}

fn small_config() -> Config {
    let mut cfg = Config::default();
    cfg.datagen.num_samples = 64;
    cfg
}

fn fixture_dataset() -> (Config, Dataset) {
    let cfg = small_config();
    let ds = generate_dataset(&cfg, 11, ExecMode::default()).expect("dataset");
    (cfg, ds)
}

fn bench_episode_generation(c: &mut Criterion) {
    let cfg = small_config();
    let mut group = c.benchmark_group("episode_batch_16");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                let eps: Vec<_> = beamsim_core::exec::map_indexed(mode, 16, |id| {
                    episode_for(&cfg, 3, id as u64).expect("episode")
                });
                black_box(eps.len())
            })
        });
    }
    group.finish();
}

fn bench_batch_gradients(c: &mut Criterion) {
    let (cfg, ds) = fixture_dataset();
    let model = BeamPredictor::new(&cfg.predictor, ds.input_width as usize, 1).expect("model");
    let batch: Vec<_> = ds.train_samples().iter().take(32).collect();
    let mut group = c.benchmark_group("batch_gradients_32");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| {
                let (loss, grads) = batch_gradients(&model, &batch, mode).expect("grads");
                black_box((loss, grads.fc_b[0]))
            })
        });
    }
    group.finish();
}

fn bench_validation_scan(c: &mut Criterion) {
    let (cfg, ds) = fixture_dataset();
    let model = BeamPredictor::new(&cfg.predictor, ds.input_width as usize, 1).expect("model");
    let samples = ds.train_samples();
    let mut group = c.benchmark_group("validation_scan");
    group.sample_size(10);
    for (name, mode) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &mode, |b, &mode| {
            b.iter(|| black_box(validation_loss(&model, samples, mode).expect("loss")))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_episode_generation, bench_batch_gradients, bench_validation_scan);
criterion_main!(benches);
