//! Central finite-difference audit of the analytic gradients, exposed as the
//! `grad-check` CLI command. Sweeps every parameter of a toy grouped-LSTM
//! model and a toy no-prior model; any mismatch beyond tolerance fails.

use beamsim_core::baselines::noprior::{train_batch_stats_grads, train_batch_stats_loss};
use beamsim_core::baselines::NoPriorModel;
use beamsim_core::config::PredictorConfig;
use beamsim_core::datagen::Sample;
use beamsim_core::exec::ExecMode;
use beamsim_core::predictor::train::batch_gradients;
use beamsim_core::predictor::BeamPredictor;
use beamsim_core::tensornet::{LayerKind, LayerSpec};
use beamsim_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-3;
pub const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct SlotReport {
    pub name: String,
    pub checked: usize,
    pub worst_abs_diff: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub slots: Vec<SlotReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.slots.iter().all(|s| s.failures == 0)
    }

    pub fn total_checked(&self) -> usize {
        self.slots.iter().map(|s| s.checked).sum()
    }
}

fn within(analytic: f64, numeric: f64) -> bool {
    let tol = ABS_FLOOR.max(REL_TOL * analytic.abs().max(numeric.abs()));
    (analytic - numeric).abs() <= tol
}

fn toy_layers(with_lstm: bool) -> Vec<LayerSpec> {
    let mk = |kind, i, o, k, s| LayerSpec {
        kind,
        in_channels: i,
        out_channels: o,
        kernel_size: k,
        stride: s,
    };
    let mut layers = vec![
        mk(LayerKind::BatchNorm, 2, 2, 0, 0),
        mk(LayerKind::Conv1d, 2, 6, 3, 1),
        mk(LayerKind::Relu, 6, 6, 0, 0),
        mk(LayerKind::Conv1d, 6, 8, 1, 2),
        mk(LayerKind::Relu, 8, 8, 0, 0),
        mk(LayerKind::MaxPool, 8, 8, 0, 0),
    ];
    if with_lstm {
        layers.push(mk(LayerKind::Lstm, 8, 8, 0, 0));
    }
    layers.push(mk(LayerKind::FullyConnected, 8, 4, 0, 0));
    layers.push(mk(LayerKind::Softmax, 4, 4, 0, 0));
    layers
}

fn toy_samples(elems: usize, gamma: usize, count: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| Sample {
            episode_id: i as u64,
            csi_update_index: 0,
            history: (0..elems).map(|_| rng.gen_range(-1.2..1.2)).collect(),
            labels: (0..gamma).map(|g| ((i + g) % 4) as u16).collect(),
            label_at_update: (i % 4) as u16,
            queries: vec![],
        })
        .collect()
}

/// Runs the full audit; prints one line per parameter slot when `verbose`.
pub fn run(verbose: bool) -> Result<GradCheckReport> {
    let mut report = GradCheckReport::default();

    // Grouped-LSTM model at toy scale.
    let cfg = PredictorConfig {
        history_len: 2,
        interpolation_factor: 2,
        num_beams: 4,
        layers: toy_layers(true),
    };
    let mut model = BeamPredictor::new(&cfg, 4, 17)?;
    let samples = toy_samples(model.history_elems(), 2, 3, 1017);
    let refs: Vec<&Sample> = samples.iter().collect();
    let (_, grads) = batch_gradients(&model, &refs, ExecMode::Sequential)?;
    let analytic: Vec<(String, Vec<f64>)> = [
        ("lstm/bn_scale", grads.bn_scale.clone()),
        ("lstm/bn_shift", grads.bn_shift.clone()),
        ("lstm/conv1_k", grads.conv1_k.clone()),
        ("lstm/conv1_b", grads.conv1_b.clone()),
        ("lstm/conv2_k", grads.conv2_k.clone()),
        ("lstm/conv2_b", grads.conv2_b.clone()),
        ("lstm/lstm_w", grads.lstm_w.clone()),
        ("lstm/lstm_u", grads.lstm_u.clone()),
        ("lstm/lstm_b", grads.lstm_b.clone()),
        ("lstm/fc_w", grads.fc_w.clone()),
        ("lstm/fc_b", grads.fc_b.clone()),
    ]
    .into_iter()
    .map(|(n, g)| (n.to_string(), g))
    .collect();
    for (slot, (name, analytic_slot)) in analytic.iter().enumerate() {
        let mut sr = SlotReport {
            name: name.clone(),
            checked: 0,
            worst_abs_diff: 0.0,
            failures: 0,
        };
        let n = model.params_mut()[slot].len();
        for idx in 0..n {
            let base = model.params_mut()[slot].values()[idx];
            model.params_mut()[slot].values_mut()[idx] = base + FD_STEP;
            let (plus, _) = batch_gradients(&model, &refs, ExecMode::Sequential)?;
            model.params_mut()[slot].values_mut()[idx] = base - FD_STEP;
            let (minus, _) = batch_gradients(&model, &refs, ExecMode::Sequential)?;
            model.params_mut()[slot].values_mut()[idx] = base;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            sr.checked += 1;
            sr.worst_abs_diff = sr.worst_abs_diff.max((analytic_slot[idx] - numeric).abs());
            if !within(analytic_slot[idx], numeric) {
                sr.failures += 1;
            }
        }
        if verbose {
            println!(
                "  {:<16} {:>5} params, worst |diff| {:.3e}, failures {}",
                sr.name, sr.checked, sr.worst_abs_diff, sr.failures
            );
        }
        report.slots.push(sr);
    }

    // No-prior model.
    let np_cfg = PredictorConfig {
        history_len: 1,
        interpolation_factor: 1,
        num_beams: 4,
        layers: toy_layers(false),
    };
    let mut np = NoPriorModel::new(&np_cfg, 4, 23)?;
    let np_samples = toy_samples(np.pre.snapshot_len(), 1, 4, 99);
    let (np_grads, np_names) = train_batch_stats_grads(&np, &np_samples)?;
    for (slot, (grad, name)) in np_grads.iter().zip(&np_names).enumerate() {
        let mut sr = SlotReport {
            name: format!("no_prior/{name}"),
            checked: 0,
            worst_abs_diff: 0.0,
            failures: 0,
        };
        let n = np.params_mut()[slot].len();
        for idx in 0..n {
            let base = np.params_mut()[slot].values()[idx];
            np.params_mut()[slot].values_mut()[idx] = base + FD_STEP;
            let plus = train_batch_stats_loss(&np, &np_samples)?;
            np.params_mut()[slot].values_mut()[idx] = base - FD_STEP;
            let minus = train_batch_stats_loss(&np, &np_samples)?;
            np.params_mut()[slot].values_mut()[idx] = base;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            sr.checked += 1;
            sr.worst_abs_diff = sr.worst_abs_diff.max((grad[idx] - numeric).abs());
            if !within(grad[idx], numeric) {
                sr.failures += 1;
            }
        }
        if verbose {
            println!(
                "  {:<16} {:>5} params, worst |diff| {:.3e}, failures {}",
                sr.name, sr.checked, sr.worst_abs_diff, sr.failures
            );
        }
        report.slots.push(sr);
    }
    Ok(report)
}
