// probe: desk-scale convergence vs learning rate
use beamsim_core::config::{Config, TrainingConfig};
use beamsim_core::datagen::generate_dataset;
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::{train_predictor, BeamPredictor};

fn main() {
    let cfg = Config::default().desk_scale();
    let ds = generate_dataset(&cfg, 7, ExecMode::default()).unwrap();
    for lr in [3e-3, 1e-2] {
        let mut model = BeamPredictor::new(&cfg.predictor, ds.input_width as usize, 1).unwrap();
        let tcfg = TrainingConfig { learning_rate: lr, ..cfg.training.clone() };
        let r = train_predictor(&mut model, ds.train_samples(), ds.validation_samples(), &tcfg, 2, ExecMode::default()).unwrap();
        let v: Vec<String> = r.val_loss.iter().map(|x| format!("{x:.3}")).collect();
        println!("lr {lr}: val trace {}", v.join(" "));
    }
}
