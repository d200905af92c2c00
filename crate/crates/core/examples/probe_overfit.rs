// probe: overfit trajectory on a tiny synthetic set
use beamsim_core::config::{PredictorConfig, TrainingConfig};
use beamsim_core::datagen::Sample;
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::{train_predictor, BeamPredictor};
use beamsim_core::tensornet::{LayerKind, LayerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let mk = |kind, i, o, k, s| LayerSpec { kind, in_channels: i, out_channels: o, kernel_size: k, stride: s };
    let layers = vec![
        mk(LayerKind::BatchNorm, 2, 2, 0, 0),
        mk(LayerKind::Conv1d, 2, 8, 3, 3),
        mk(LayerKind::Relu, 8, 8, 0, 0),
        mk(LayerKind::Conv1d, 8, 8, 1, 3),
        mk(LayerKind::Relu, 8, 8, 0, 0),
        mk(LayerKind::MaxPool, 8, 8, 0, 0),
        mk(LayerKind::Lstm, 8, 8, 0, 0),
        mk(LayerKind::FullyConnected, 8, 4, 0, 0),
        mk(LayerKind::Softmax, 4, 4, 0, 0),
    ];
    let cfg = PredictorConfig { history_len: 2, interpolation_factor: 2, num_beams: 4, layers };
    let width = 4;
    let model = BeamPredictor::new(&cfg, width, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples: Vec<Sample> = (0..16).map(|i| {
        let beam = (i % 4) as u16;
        let mut history = vec![0.0; model.history_elems()];
        for v in history.iter_mut() { *v = rng.gen_range(-0.05..0.05); }
        for t in 0..2usize { history[t * 2 * width + beam as usize % width] += 1.0; }
        Sample { episode_id: i as u64, csi_update_index: 0, history, labels: vec![beam; 2], label_at_update: beam, queries: vec![] }
    }).collect();
    for (lr, hidden_note) in [(1e-3, ""), (3e-3, ""), (1e-2, "")] {
        let mut m = model.clone();
        let tcfg = TrainingConfig { epochs: 200, batch_size: 16, learning_rate: lr, ..TrainingConfig::default() };
        let r = train_predictor(&mut m, &samples, &samples, &tcfg, 9, ExecMode::default()).unwrap();
        println!("lr {lr}{hidden_note}: epoch 1 {:.4}, 50 {:.4}, 100 {:.4}, 200 {:.4}", r.train_loss[0], r.train_loss[49], r.train_loss[99], r.train_loss[199]);
    }
}
