//! Deep baseline without prior information: one instantaneous low-band
//! angular CSI snapshot, the same preprocessing stack as the main predictor
//! (shared implementation), then FC + softmax. No recurrence, no timing
//! input; trained on (CSI at `t_n`, optimal beam at `t_n`) pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{PredictorConfig, TrainingConfig};
use crate::datagen::Sample;
use crate::error::Error;
use crate::exec::{map_chunks, map_indexed, ExecMode};
use crate::predictor::model::{PreGradRefs, Preprocess};
use crate::predictor::train::adam_from;
use crate::predictor::{argmax_lowest, rank_descending, TrainReport};
use crate::tensornet::checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader, ModelKind};
use crate::tensornet::layers::cross_entropy_grad_row;
use crate::tensornet::math::axpy;
use crate::tensornet::{adam_step, resolve_stack, LayerSpec, Linear, Param};
use crate::Result;

const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone)]
pub struct NoPriorModel {
    pub pre: Preprocess,
    pub fc: Linear,
    pub layers: Vec<LayerSpec>,
    pub num_beams: usize,
}

#[derive(Debug, Clone)]
struct NoPriorGrads {
    bn_scale: Vec<f64>,
    bn_shift: Vec<f64>,
    conv1_k: Vec<f64>,
    conv1_b: Vec<f64>,
    conv2_k: Vec<f64>,
    conv2_b: Vec<f64>,
    fc_w: Vec<f64>,
    fc_b: Vec<f64>,
}

impl NoPriorGrads {
    fn zeros_for(model: &NoPriorModel) -> Self {
        NoPriorGrads {
            bn_scale: vec![0.0; model.pre.bn.scale.len()],
            bn_shift: vec![0.0; model.pre.bn.shift.len()],
            conv1_k: vec![0.0; model.pre.conv1.kernels.len()],
            conv1_b: vec![0.0; model.pre.conv1.bias.len()],
            conv2_k: vec![0.0; model.pre.conv2.kernels.len()],
            conv2_b: vec![0.0; model.pre.conv2.bias.len()],
            fc_w: vec![0.0; model.fc.w.len()],
            fc_b: vec![0.0; model.fc.b.len()],
        }
    }

    fn accumulate(&mut self, other: &Self) {
        axpy(&mut self.bn_scale, 1.0, &other.bn_scale);
        axpy(&mut self.bn_shift, 1.0, &other.bn_shift);
        axpy(&mut self.conv1_k, 1.0, &other.conv1_k);
        axpy(&mut self.conv1_b, 1.0, &other.conv1_b);
        axpy(&mut self.conv2_k, 1.0, &other.conv2_k);
        axpy(&mut self.conv2_b, 1.0, &other.conv2_b);
        axpy(&mut self.fc_w, 1.0, &other.fc_w);
        axpy(&mut self.fc_b, 1.0, &other.fc_b);
    }

    fn store_into(&self, model: &mut NoPriorModel) {
        let values: Vec<&[f64]> = vec![
            &self.bn_scale,
            &self.bn_shift,
            &self.conv1_k,
            &self.conv1_b,
            &self.conv2_k,
            &self.conv2_b,
            &self.fc_w,
            &self.fc_b,
        ];
        for (param, grad) in model.params_mut().into_iter().zip(values) {
            param.set_grad(grad);
        }
    }
}

impl NoPriorModel {
    /// Builds from the no-LSTM layer stack; `cfg.layers` must omit the LSTM
    /// row (see [`LayerSpec::no_prior_stack`]).
    pub fn new(cfg: &PredictorConfig, input_width: usize, seed: u64) -> Result<Self> {
        let dims = resolve_stack(&cfg.layers, input_width)?;
        if dims.lstm.is_some() {
            return Err(Error::shape("no-prior model must not contain an LSTM layer"));
        }
        if dims.fc.1 != cfg.num_beams {
            return Err(Error::shape(format!(
                "FC output {} must equal num_beams {}",
                dims.fc.1, cfg.num_beams
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pre =
            Preprocess::new(dims.input_channels, input_width, dims.conv1, dims.conv2, &mut rng)?;
        let fc = Linear::new(dims.fc.0, dims.fc.1, &mut rng);
        Ok(NoPriorModel { pre, fc, layers: cfg.layers.clone(), num_beams: cfg.num_beams })
    }

    /// Class probabilities from one `[2, width]` snapshot.
    pub fn forward_infer(&self, snapshot: &[f64]) -> Result<Vec<f64>> {
        if snapshot.len() != self.pre.snapshot_len() {
            return Err(Error::shape(format!(
                "snapshot has {} values, expected {}",
                snapshot.len(),
                self.pre.snapshot_len()
            )));
        }
        let feats = self.pre.features_infer(snapshot, 1)?;
        let mut logits = vec![0.0; self.num_beams];
        self.fc.forward(&feats, &mut logits);
        crate::tensornet::layers::softmax_row(&mut logits);
        Ok(logits)
    }

    pub fn predict_beam(&self, snapshot: &[f64]) -> Result<(usize, Vec<usize>)> {
        let probs = self.forward_infer(snapshot)?;
        Ok((argmax_lowest(&probs), rank_descending(&probs)))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.pre.bn.scale,
            &mut self.pre.bn.shift,
            &mut self.pre.conv1.kernels,
            &mut self.pre.conv1.bias,
            &mut self.pre.conv2.kernels,
            &mut self.pre.conv2.bias,
            &mut self.fc.w,
            &mut self.fc.b,
        ]
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let arrays: Vec<(&str, Vec<f64>)> = vec![
            ("bn_scale", self.pre.bn.scale.values().to_vec()),
            ("bn_shift", self.pre.bn.shift.values().to_vec()),
            ("bn_running_mean", self.pre.bn.running_mean.clone()),
            ("bn_running_var", self.pre.bn.running_var.clone()),
            ("conv1_kernels", self.pre.conv1.kernels.values().to_vec()),
            ("conv1_bias", self.pre.conv1.bias.values().to_vec()),
            ("conv2_kernels", self.pre.conv2.kernels.values().to_vec()),
            ("conv2_bias", self.pre.conv2.bias.values().to_vec()),
            ("fc_w", self.fc.w.values().to_vec()),
            ("fc_b", self.fc.b.values().to_vec()),
        ];
        let refs: Vec<(&str, &[f64])> = arrays.iter().map(|(n, d)| (*n, d.as_slice())).collect();
        let header = CheckpointHeader {
            kind: ModelKind::NoPrior,
            layers: self.layers.clone(),
            history_len: 1,
            interpolation_factor: 1,
            num_beams: self.num_beams,
            input_width: self.pre.input_width,
        };
        save_checkpoint(path, &header, &refs)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let (header, arrays) = load_checkpoint(path)?;
        if header.kind != ModelKind::NoPrior {
            return Err(Error::CorruptFile("checkpoint holds a different model kind".into()));
        }
        let cfg = PredictorConfig {
            history_len: 1,
            interpolation_factor: 1,
            num_beams: header.num_beams,
            layers: header.layers.clone(),
        };
        let mut model = NoPriorModel::new(&cfg, header.input_width, 0)?;
        for (name, data) in &arrays {
            match name.as_str() {
                "bn_scale" => model.pre.bn.scale.values_mut().copy_from_slice(data),
                "bn_shift" => model.pre.bn.shift.values_mut().copy_from_slice(data),
                "bn_running_mean" => model.pre.bn.running_mean.copy_from_slice(data),
                "bn_running_var" => model.pre.bn.running_var.copy_from_slice(data),
                "conv1_kernels" => model.pre.conv1.kernels.values_mut().copy_from_slice(data),
                "conv1_bias" => model.pre.conv1.bias.values_mut().copy_from_slice(data),
                "conv2_kernels" => model.pre.conv2.kernels.values_mut().copy_from_slice(data),
                "conv2_bias" => model.pre.conv2.bias.values_mut().copy_from_slice(data),
                "fc_w" => model.fc.w.values_mut().copy_from_slice(data),
                "fc_b" => model.fc.b.values_mut().copy_from_slice(data),
                other => return Err(Error::CorruptFile(format!("unexpected array {other}"))),
            }
        }
        Ok(model)
    }
}

/// Snapshot used as the no-prior input: the latest CSI update of the window.
pub fn latest_snapshot<'a>(sample: &'a Sample, snap_len: usize) -> &'a [f64] {
    let start = sample.history.len() - snap_len;
    &sample.history[start..]
}

fn batch_gradients(
    model: &NoPriorModel,
    batch: &[&Sample],
    mode: ExecMode,
) -> Result<(f64, NoPriorGrads)> {
    let snap_len = model.pre.snapshot_len();
    let mut x_all = Vec::with_capacity(batch.len() * snap_len);
    for s in batch {
        x_all.extend_from_slice(latest_snapshot(s, snap_len));
    }
    let (mean, var) = model.pre.bn.batch_stats(&x_all, batch.len(), model.pre.input_width)?;
    let weight = 1.0 / batch.len() as f64;
    let chunk_results: Vec<Result<(f64, NoPriorGrads)>> =
        map_chunks(mode, batch, GRAD_CHUNKS, |chunk| {
            let mut grads = NoPriorGrads::zeros_for(model);
            let mut loss = 0.0;
            for sample in chunk {
                let snap = latest_snapshot(sample, snap_len);
                let (feats, cache) = model.pre.features_with_stats(snap, 1, &mean, &var)?;
                let mut logits = vec![0.0; model.num_beams];
                model.fc.forward(&feats, &mut logits);
                crate::tensornet::layers::softmax_row(&mut logits);
                let mut dlogits = vec![0.0; model.num_beams];
                loss += cross_entropy_grad_row(
                    &logits,
                    sample.label_at_update as usize,
                    weight,
                    &mut dlogits,
                );
                let dfeat = model.fc.backward(&feats, &dlogits, &mut grads.fc_w, &mut grads.fc_b);
                let mut refs = PreGradRefs {
                    bn_scale: &mut grads.bn_scale,
                    bn_shift: &mut grads.bn_shift,
                    conv1_k: &mut grads.conv1_k,
                    conv1_b: &mut grads.conv1_b,
                    conv2_k: &mut grads.conv2_k,
                    conv2_b: &mut grads.conv2_b,
                };
                model.pre.backward(&cache, &dfeat, &mut refs);
            }
            Ok((loss, grads))
        });
    let mut total = NoPriorGrads::zeros_for(model);
    let mut loss_sum = 0.0;
    for r in chunk_results {
        let (l, g) = r?;
        loss_sum += l;
        total.accumulate(&g);
    }
    Ok((loss_sum / batch.len() as f64, total))
}

/// Training-path loss of one batch (minibatch statistics, no side effects);
/// the hook the finite-difference oracle drives.
pub fn train_batch_stats_loss(model: &NoPriorModel, samples: &[Sample]) -> Result<f64> {
    let refs: Vec<&Sample> = samples.iter().collect();
    Ok(batch_gradients(model, &refs, ExecMode::Sequential)?.0)
}

/// Analytic gradients of [`train_batch_stats_loss`], flattened per array.
pub fn train_batch_stats_grads(
    model: &NoPriorModel,
    samples: &[Sample],
) -> Result<(Vec<Vec<f64>>, Vec<&'static str>)> {
    let refs: Vec<&Sample> = samples.iter().collect();
    let (_, g) = batch_gradients(model, &refs, ExecMode::Sequential)?;
    Ok((
        vec![g.bn_scale, g.bn_shift, g.conv1_k, g.conv1_b, g.conv2_k, g.conv2_b, g.fc_w, g.fc_b],
        vec!["bn_scale", "bn_shift", "conv1_k", "conv1_b", "conv2_k", "conv2_b", "fc_w", "fc_b"],
    ))
}

fn validation_loss(model: &NoPriorModel, samples: &[Sample], mode: ExecMode) -> Result<f64> {
    let snap_len = model.pre.snapshot_len();
    let losses: Vec<Result<f64>> = map_indexed(mode, samples.len(), |i| {
        let s = &samples[i];
        let probs = model.forward_infer(latest_snapshot(s, snap_len))?;
        Ok(-probs[s.label_at_update as usize].max(f64::MIN_POSITIVE).ln())
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / samples.len().max(1) as f64)
}

/// Trains the no-prior baseline on instantaneous (CSI, optimal beam) pairs.
pub fn train_no_prior(
    model: &mut NoPriorModel,
    train: &[Sample],
    val: &[Sample],
    tcfg: &TrainingConfig,
    seed: u64,
    mode: ExecMode,
) -> Result<TrainReport> {
    use rand::seq::SliceRandom;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let opt = adam_from(tcfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport::default();
    let mut step = 0usize;
    for _ in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for ids in order.chunks(tcfg.batch_size) {
            let batch: Vec<&Sample> = ids.iter().map(|&i| &train[i]).collect();
            let snap_len = model.pre.snapshot_len();
            let mut x_all = Vec::with_capacity(batch.len() * snap_len);
            for s in &batch {
                x_all.extend_from_slice(latest_snapshot(s, snap_len));
            }
            let (mean, var) =
                model.pre.bn.batch_stats(&x_all, batch.len(), model.pre.input_width)?;
            model.pre.bn.update_running(&mean, &var);
            let (loss, grads) = batch_gradients(model, &batch, mode)?;
            epoch_loss += loss * batch.len() as f64;
            seen += batch.len();
            grads.store_into(model);
            step += 1;
            adam_step(&mut model.params_mut(), &opt, step);
        }
        report.train_loss.push(epoch_loss / seen as f64);
        if !val.is_empty() {
            report.val_loss.push(validation_loss(model, val, mode)?);
        }
    }
    Ok(report)
}
