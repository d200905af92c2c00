// probe: candidate default stack at lr 3e-3, both scenarios
use beamsim_core::config::{Config, TrainingConfig, ScenarioKind};
use beamsim_core::datagen::generate_dataset;
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::{train_predictor, BeamPredictor};
use beamsim_core::tensornet::{LayerKind, LayerSpec};

fn candidate_stack() -> Vec<LayerSpec> {
    let mk = |kind, i, o, k, s| LayerSpec { kind, in_channels: i, out_channels: o, kernel_size: k, stride: s };
    vec![
        mk(LayerKind::BatchNorm, 2, 2, 0, 0),
        mk(LayerKind::Conv1d, 2, 64, 3, 1),
        mk(LayerKind::Relu, 64, 64, 0, 0),
        mk(LayerKind::Conv1d, 64, 256, 6, 1),
        mk(LayerKind::Relu, 256, 256, 0, 0),
        mk(LayerKind::MaxPool, 256, 256, 0, 0),
        mk(LayerKind::Lstm, 256, 256, 0, 0),
        mk(LayerKind::FullyConnected, 256, 32, 0, 0),
        mk(LayerKind::Softmax, 32, 32, 0, 0),
    ]
}

fn main() {
    for kind in [ScenarioKind::Stationary, ScenarioKind::NonStationary] {
        let mut cfg = Config::default().desk_scale();
        cfg.scenario.scenario_kind = kind;
        cfg.predictor.layers = candidate_stack();
        let ds = generate_dataset(&cfg, 7, ExecMode::default()).unwrap();
        for lr in [3e-3] {
            let mut model = BeamPredictor::new(&cfg.predictor, ds.input_width as usize, 1).unwrap();
            let tcfg = TrainingConfig { learning_rate: lr, ..cfg.training.clone() };
            let r = train_predictor(&mut model, ds.train_samples(), ds.validation_samples(), &tcfg, 2, ExecMode::default()).unwrap();
            let v: Vec<String> = r.val_loss.iter().map(|x| format!("{x:.3}")).collect();
            println!("{kind:?} lr {lr}: {}", v.join(" "));
        }
    }
}
