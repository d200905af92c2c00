//! Minibatch training of the beam predictor.
//!
//! Per batch: batch-norm statistics are computed once over every snapshot of
//! the minibatch (they depend only on the input, so per-sample gradients stay
//! exact); per-sample forward/backward then runs in fixed-boundary chunks,
//! chunk gradients are reduced left-to-right, and one Adam step follows.
//! Identical results in sequential and parallel mode, and across runs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainingConfig;
use crate::datagen::Sample;
use crate::error::Error;
use crate::exec::{map_chunks, map_indexed, ExecMode};
use crate::predictor::model::{BeamPredictor, PreGradRefs, PredictorGrads};
use crate::tensornet::{adam_step, AdamParams};
use crate::Result;

/// Chunk count for intra-batch parallelism; fixed so that chunk boundaries
/// (and thus reduction order) do not depend on the machine.
const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

pub(crate) fn adam_from(tcfg: &TrainingConfig) -> AdamParams {
    AdamParams {
        learning_rate: tcfg.learning_rate,
        beta1: tcfg.beta1,
        beta2: tcfg.beta2,
        epsilon: tcfg.adam_epsilon,
    }
}

/// Forward + backward over one minibatch; returns the mean loss (per sample
/// and head) and the summed gradients.
pub fn batch_gradients(
    model: &BeamPredictor,
    batch: &[&Sample],
    mode: ExecMode,
) -> Result<(f64, PredictorGrads)> {
    let m = model.history_len;
    let snap_len = model.pre.snapshot_len();
    let mut x_all = Vec::with_capacity(batch.len() * m * snap_len);
    for s in batch {
        if s.history.len() != m * snap_len {
            return Err(Error::shape("sample history does not match the model".to_string()));
        }
        x_all.extend_from_slice(&s.history);
    }
    let (mean, var) = model.pre.bn.batch_stats(&x_all, batch.len() * m, model.pre.input_width)?;

    let weight = 1.0 / (batch.len() * model.gamma) as f64;
    let chunk_results: Vec<Result<(f64, PredictorGrads)>> =
        map_chunks(mode, batch, GRAD_CHUNKS, |chunk| {
            let mut grads = PredictorGrads::zeros_for(model);
            let mut loss = 0.0;
            for sample in chunk {
                let (feats, cache) =
                    model.pre.features_with_stats(&sample.history, m, &mean, &var)?;
                let run = model.sequence_forward(&feats);
                let (l, dlogits) = model.head_loss_and_grads(&run, &sample.labels, weight);
                loss += l;
                let dfeat = model.sequence_backward(&run, &dlogits, &mut grads);
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

    let mut total = PredictorGrads::zeros_for(model);
    let mut loss_sum = 0.0;
    for r in chunk_results {
        let (l, g) = r?;
        loss_sum += l;
        total.accumulate(&g);
    }
    Ok((loss_sum / (batch.len() * model.gamma) as f64, total))
}

/// Mean cross-entropy over samples and heads with inference-mode batch norm.
pub fn validation_loss(model: &BeamPredictor, samples: &[Sample], mode: ExecMode) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let losses: Vec<Result<f64>> = map_indexed(mode, samples.len(), |i| {
        let s = &samples[i];
        let probs = model.forward_infer(&s.history)?;
        let mut loss = 0.0;
        for (g, &label) in s.labels.iter().enumerate() {
            loss -= probs[g][label as usize].max(f64::MIN_POSITIVE).ln();
        }
        Ok(loss / s.labels.len() as f64)
    });
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / samples.len() as f64)
}

/// Trains in place; one gradient step per minibatch, shuffled each epoch from
/// the given seed. Returns per-epoch mean training loss and validation loss.
pub fn train_predictor(
    model: &mut BeamPredictor,
    train: &[Sample],
    val: &[Sample],
    tcfg: &TrainingConfig,
    seed: u64,
    mode: ExecMode,
) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let opt = adam_from(tcfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = TrainReport::default();
    let mut step = 0usize;
    for _epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for ids in order.chunks(tcfg.batch_size) {
            let batch: Vec<&Sample> = ids.iter().map(|&i| &train[i]).collect();
            // Running BN statistics advance once per batch.
            let m = model.history_len;
            let mut x_all = Vec::with_capacity(batch.len() * m * model.pre.snapshot_len());
            for s in &batch {
                x_all.extend_from_slice(&s.history);
            }
            let (mean, var) =
                model.pre.bn.batch_stats(&x_all, batch.len() * m, model.pre.input_width)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::model::toy_predictor_config;
    use rand::Rng;

    fn synthetic_samples(
        model: &BeamPredictor,
        count: usize,
        seed: u64,
    ) -> Vec<Sample> {
        // Beam index determined by which input slot carries the spike, so the
        // mapping is learnable.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|i| {
                let beam = (i % model.num_beams) as u16;
                let mut history = vec![0.0; model.history_elems()];
                for v in history.iter_mut() {
                    *v = rng.gen_range(-0.05..0.05);
                }
                let w = model.pre.input_width;
                for t in 0..model.history_len {
                    history[t * 2 * w + beam as usize % w] += 1.0;
                }
                Sample {
                    episode_id: i as u64,
                    csi_update_index: 0,
                    history,
                    labels: vec![beam; model.gamma],
                    label_at_update: beam,
                    queries: vec![],
                }
            })
            .collect()
    }

    #[test]
    fn parallel_and_sequential_gradients_are_identical() {
        let (cfg, width) = toy_predictor_config(3, 2);
        let model = BeamPredictor::new(&cfg, width, 42).unwrap();
        let samples = synthetic_samples(&model, 13, 1);
        let refs: Vec<&Sample> = samples.iter().collect();
        let (l_seq, g_seq) = batch_gradients(&model, &refs, ExecMode::Sequential).unwrap();
        let (l_par, g_par) = batch_gradients(&model, &refs, ExecMode::default()).unwrap();
        assert_eq!(l_seq.to_bits(), l_par.to_bits());
        assert_eq!(g_seq.lstm_w, g_par.lstm_w);
        assert_eq!(g_seq.bn_scale, g_par.bn_scale);
        assert_eq!(g_seq.fc_w, g_par.fc_w);
    }

    #[test]
    fn initial_loss_is_near_uniform() {
        let (cfg, width) = toy_predictor_config(2, 3);
        let model = BeamPredictor::new(&cfg, width, 7).unwrap();
        let samples = synthetic_samples(&model, 32, 2);
        let refs: Vec<&Sample> = samples.iter().collect();
        let (loss, _) = batch_gradients(&model, &refs, ExecMode::default()).unwrap();
        let uniform = (model.num_beams as f64).ln();
        assert!((loss - uniform).abs() < 0.3, "init loss {loss} should be near {uniform}");
    }

    #[test]
    fn tiny_dataset_overfits() {
        let (cfg, width) = toy_predictor_config(2, 2);
        let mut model = BeamPredictor::new(&cfg, width, 3).unwrap();
        let samples = synthetic_samples(&model, 16, 5);
        let tcfg = TrainingConfig {
            epochs: 200,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainingConfig::default()
        };
        let report =
            train_predictor(&mut model, &samples, &samples, &tcfg, 9, ExecMode::default())
                .unwrap();
        let final_loss = *report.train_loss.last().unwrap();
        assert!(final_loss < 0.05, "training loss {final_loss} should collapse on 16 samples");
    }

    #[test]
    fn same_seed_gives_identical_loss_traces() {
        let (cfg, width) = toy_predictor_config(2, 2);
        let samples = {
            let model = BeamPredictor::new(&cfg, width, 3).unwrap();
            synthetic_samples(&model, 24, 5)
        };
        let tcfg = TrainingConfig { epochs: 5, batch_size: 8, ..TrainingConfig::default() };
        let run = |mode| {
            let mut model = BeamPredictor::new(&cfg, width, 3).unwrap();
            train_predictor(&mut model, &samples, &samples, &tcfg, 11, mode).unwrap().train_loss
        };
        let a = run(ExecMode::default());
        let b = run(ExecMode::default());
        let c = run(ExecMode::Sequential);
        assert_eq!(a, b);
        assert_eq!(a, c, "sequential fallback must reproduce the parallel trajectory");
    }
}
