// probe: desk-scale generation + one epoch timing
use beamsim_core::config::{Config, TrainingConfig};
use beamsim_core::datagen::generate_dataset;
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::{train_predictor, BeamPredictor};
use std::time::Instant;

fn main() {
    let mut cfg = Config::default().desk_scale();
    cfg.training.epochs = 1;
    let t0 = Instant::now();
    let ds = generate_dataset(&cfg, 7, ExecMode::default()).unwrap();
    println!("dataset: {} samples in {:.2?}", ds.samples.len(), t0.elapsed());
    let width = (ds.input_width) as usize;
    let mut model = BeamPredictor::new(&cfg.predictor, width, 1).unwrap();
    let t1 = Instant::now();
    let tcfg = TrainingConfig { epochs: 1, ..cfg.training.clone() };
    let r = train_predictor(&mut model, ds.train_samples(), ds.validation_samples(), &tcfg, 2, ExecMode::default()).unwrap();
    println!("1 epoch in {:.2?}; train {:.3} val {:.3}", t1.elapsed(), r.train_loss[0], r.val_loss[0]);
}
