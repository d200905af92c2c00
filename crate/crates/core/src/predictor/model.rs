//! The grouped-LSTM beam classifier.
//!
//! Every CSI snapshot runs through a shared preprocessing stack
//! (BN -> Conv -> ReLU -> Conv -> ReLU -> global max pool) producing one
//! feature vector. A single LSTM cell consumes the `m` history features in
//! time order, then runs `Gamma` further steps: the first takes the latest
//! CSI feature as input, each later step feeds on the previous step's hidden
//! output. Every step's hidden state passes through one shared FC + softmax
//! head, so all interpolation slots share one parameter set and gradients
//! from all heads accumulate into it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PredictorConfig;
use crate::error::Error;
use crate::predictor::{
    argmax_lowest, interpolation_index, rank_descending, timing_offset, PredictionOutput,
    TimingContext,
};
use crate::tensornet::checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointHeader, ModelKind,
};
use crate::tensornet::layers::{
    cross_entropy_grad_row, max_pool_backward, max_pool_forward, relu_backward, relu_forward,
    softmax_row,
};
use crate::tensornet::math::axpy;
use crate::tensornet::{
    resolve_stack, BatchNorm, Conv1d, LayerSpec, Linear, LstmCell, LstmStepCache, Param,
};
use crate::Result;

/// Shared CSI preprocessing stack; also the front end of the no-history
/// baseline, which reuses this exact implementation.
#[derive(Debug, Clone)]
pub struct Preprocess {
    pub bn: BatchNorm,
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub input_width: usize,
    pub channels: usize,
    pub feature_dim: usize,
    l1: usize,
    l2: usize,
}

/// Activations needed to run the preprocessing backward pass.
#[derive(Debug, Clone)]
pub struct PreCache {
    bn_x_hat: Vec<f64>,
    bn_out: Vec<f64>,
    relu1_out: Vec<f64>,
    relu2_out: Vec<f64>,
    pool_arg: Vec<usize>,
    count: usize,
}

/// Mutable views of the preprocessing gradient buffers.
pub struct PreGradRefs<'a> {
    pub bn_scale: &'a mut [f64],
    pub bn_shift: &'a mut [f64],
    pub conv1_k: &'a mut [f64],
    pub conv1_b: &'a mut [f64],
    pub conv2_k: &'a mut [f64],
    pub conv2_b: &'a mut [f64],
}

impl Preprocess {
    pub fn new(
        channels: usize,
        input_width: usize,
        conv1: (usize, usize, usize, usize),
        conv2: (usize, usize, usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let c1 = Conv1d::new(conv1.0, conv1.1, conv1.2, conv1.3, rng);
        let c2 = Conv1d::new(conv2.0, conv2.1, conv2.2, conv2.3, rng);
        let l1 = c1.out_len(input_width)?;
        let l2 = c2.out_len(l1)?;
        Ok(Preprocess {
            bn: BatchNorm::new(channels),
            conv1: c1,
            conv2: c2,
            input_width,
            channels,
            feature_dim: conv2.1,
            l1,
            l2,
        })
    }

    pub fn snapshot_len(&self) -> usize {
        self.channels * self.input_width
    }

    /// Training-path forward for `count` snapshots `[count, C, W]` using
    /// externally computed batch statistics, so per-sample work can run in
    /// parallel while sharing one set of minibatch statistics.
    pub fn features_with_stats(
        &self,
        x: &[f64],
        count: usize,
        mean: &[f64],
        var: &[f64],
    ) -> Result<(Vec<f64>, PreCache)> {
        let (bn_out, bn_cache) = {
            let (y, cache) = self.bn.normalize(x, count, self.input_width, mean, var);
            (y, cache)
        };
        let (c1, _) = self.conv1.forward(&bn_out, count, self.input_width)?;
        let relu1_out = relu_forward(&c1);
        let (c2, _) = self.conv2.forward(&relu1_out, count, self.l1)?;
        let relu2_out = relu_forward(&c2);
        let (feats, pool_arg) = max_pool_forward(&relu2_out, count, self.feature_dim, self.l2);
        Ok((
            feats,
            PreCache { bn_x_hat: bn_cache.x_hat, bn_out, relu1_out, relu2_out, pool_arg, count },
        ))
    }

    /// Inference forward using running statistics; no cache.
    pub fn features_infer(&self, x: &[f64], count: usize) -> Result<Vec<f64>> {
        let (mean, var) = (&self.bn.running_mean, &self.bn.running_var);
        let (bn_out, _) = self.bn.normalize(x, count, self.input_width, mean, var);
        let (c1, _) = self.conv1.forward(&bn_out, count, self.input_width)?;
        let r1 = relu_forward(&c1);
        let (c2, _) = self.conv2.forward(&r1, count, self.l1)?;
        let r2 = relu_forward(&c2);
        Ok(max_pool_forward(&r2, count, self.feature_dim, self.l2).0)
    }

    /// Backward from feature gradients `[count, F]`; input gradients stop at
    /// the batch-norm layer.
    pub fn backward(&self, cache: &PreCache, gfeat: &[f64], grads: &mut PreGradRefs<'_>) {
        let count = cache.count;
        let dpool = max_pool_backward(gfeat, &cache.pool_arg, count, self.feature_dim, self.l2);
        let dr2 = relu_backward(&cache.relu2_out, &dpool);
        let dc2 = self.conv2.backward(
            &cache.relu1_out,
            count,
            self.l1,
            self.l2,
            &dr2,
            grads.conv2_k,
            grads.conv2_b,
        );
        let dr1 = relu_backward(&cache.relu1_out, &dc2);
        let dc1 = self.conv1.backward(
            &cache.bn_out,
            count,
            self.input_width,
            self.l1,
            &dr1,
            grads.conv1_k,
            grads.conv1_b,
        );
        let bn_cache = crate::tensornet::layers::BnCache { x_hat: cache.bn_x_hat.clone() };
        self.bn.backward(&dc1, &bn_cache, count, self.input_width, grads.bn_scale, grads.bn_shift);
    }
}

/// Gradient accumulator matching [`BeamPredictor::params_mut`] order.
#[derive(Debug, Clone)]
pub struct PredictorGrads {
    pub bn_scale: Vec<f64>,
    pub bn_shift: Vec<f64>,
    pub conv1_k: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_k: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub lstm_w: Vec<f64>,
    pub lstm_u: Vec<f64>,
    pub lstm_b: Vec<f64>,
    pub fc_w: Vec<f64>,
    pub fc_b: Vec<f64>,
}

impl PredictorGrads {
    pub fn zeros_for(model: &BeamPredictor) -> Self {
        PredictorGrads {
            bn_scale: vec![0.0; model.pre.bn.scale.len()],
            bn_shift: vec![0.0; model.pre.bn.shift.len()],
            conv1_k: vec![0.0; model.pre.conv1.kernels.len()],
            conv1_b: vec![0.0; model.pre.conv1.bias.len()],
            conv2_k: vec![0.0; model.pre.conv2.kernels.len()],
            conv2_b: vec![0.0; model.pre.conv2.bias.len()],
            lstm_w: vec![0.0; model.lstm.w.len()],
            lstm_u: vec![0.0; model.lstm.u.len()],
            lstm_b: vec![0.0; model.lstm.b.len()],
            fc_w: vec![0.0; model.fc.w.len()],
            fc_b: vec![0.0; model.fc.b.len()],
        }
    }

    pub fn accumulate(&mut self, other: &Self) {
        for (dst, src) in self.slots_mut_with(other) {
            axpy(dst, 1.0, src);
        }
    }

    fn slots_mut_with<'a>(&'a mut self, other: &'a Self) -> Vec<(&'a mut [f64], &'a [f64])> {
        vec![
            (&mut self.bn_scale[..], &other.bn_scale[..]),
            (&mut self.bn_shift[..], &other.bn_shift[..]),
            (&mut self.conv1_k[..], &other.conv1_k[..]),
            (&mut self.conv1_b[..], &other.conv1_b[..]),
            (&mut self.conv2_k[..], &other.conv2_k[..]),
            (&mut self.conv2_b[..], &other.conv2_b[..]),
            (&mut self.lstm_w[..], &other.lstm_w[..]),
            (&mut self.lstm_u[..], &other.lstm_u[..]),
            (&mut self.lstm_b[..], &other.lstm_b[..]),
            (&mut self.fc_w[..], &other.fc_w[..]),
            (&mut self.fc_b[..], &other.fc_b[..]),
        ]
    }

    /// Copies the accumulated gradients into the parameter gradient slots.
    pub fn store_into(&self, model: &mut BeamPredictor) {
        let values: Vec<&[f64]> = vec![
            &self.bn_scale,
            &self.bn_shift,
            &self.conv1_k,
            &self.conv1_b,
            &self.conv2_k,
            &self.conv2_b,
            &self.lstm_w,
            &self.lstm_u,
            &self.lstm_b,
            &self.fc_w,
            &self.fc_b,
        ];
        for (param, grad) in model.params_mut().into_iter().zip(values) {
            param.set_grad(grad);
        }
    }
}

/// Per-sample forward trace of the recurrent part.
#[derive(Debug, Clone)]
pub struct SequenceRun {
    pub caches: Vec<LstmStepCache>,
    pub h_out: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct BeamPredictor {
    pub pre: Preprocess,
    pub lstm: LstmCell,
    pub fc: Linear,
    pub layers: Vec<LayerSpec>,
    pub history_len: usize,
    pub gamma: usize,
    pub num_beams: usize,
    pub hidden: usize,
}

impl BeamPredictor {
    pub fn new(cfg: &PredictorConfig, input_width: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let dims = resolve_stack(&cfg.layers, input_width)?;
        let (lstm_in, hidden) = dims
            .lstm
            .ok_or_else(|| Error::shape("beam predictor requires an LSTM layer"))?;
        if cfg.interpolation_factor > 1 && lstm_in != hidden {
            return Err(Error::shape(
                "chained interpolation steps feed hidden states back as inputs, \
                 so the LSTM must be square",
            ));
        }
        if dims.fc.1 != cfg.num_beams {
            return Err(Error::shape(format!(
                "FC output {} must equal num_beams {}",
                dims.fc.1, cfg.num_beams
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pre = Preprocess::new(dims.input_channels, input_width, dims.conv1, dims.conv2, &mut rng)?;
        let lstm = LstmCell::new(lstm_in, hidden, &mut rng);
        let fc = Linear::new(dims.fc.0, dims.fc.1, &mut rng);
        Ok(BeamPredictor {
            pre,
            lstm,
            fc,
            layers: cfg.layers.clone(),
            history_len: cfg.history_len,
            gamma: cfg.interpolation_factor,
            num_beams: cfg.num_beams,
            hidden,
        })
    }

    pub fn history_elems(&self) -> usize {
        self.history_len * self.pre.snapshot_len()
    }

    /// Runs the history pass and the interpolation chain on preprocessed
    /// features `[m, F]`, producing `Gamma` probability vectors and the full
    /// trace for the backward pass.
    pub fn sequence_forward(&self, feats: &[f64]) -> SequenceRun {
        let (m, f_dim, hd) = (self.history_len, self.pre.feature_dim, self.hidden);
        debug_assert_eq!(feats.len(), m * f_dim);
        let steps = m + self.gamma;
        let mut caches = Vec::with_capacity(steps);
        let mut h_out: Vec<Vec<f64>> = Vec::with_capacity(steps);
        let mut logits = Vec::with_capacity(self.gamma);
        let mut probs = Vec::with_capacity(self.gamma);
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        for s in 0..steps {
            let x: Vec<f64> = if s < m {
                feats[s * f_dim..(s + 1) * f_dim].to_vec()
            } else if s == m {
                feats[(m - 1) * f_dim..m * f_dim].to_vec()
            } else {
                h_out[s - 1].clone()
            };
            let (h_prev, c_prev) = (h.clone(), c.clone());
            let cache = self.lstm.step(&x, &h_prev, &c_prev, &mut h, &mut c);
            caches.push(cache);
            h_out.push(h.clone());
            if s >= m {
                let mut row = vec![0.0; self.num_beams];
                self.fc.forward(&h, &mut row);
                logits.push(row.clone());
                softmax_row(&mut row);
                probs.push(row);
            }
        }
        SequenceRun { caches, h_out, logits, probs }
    }

    /// Backpropagates per-head logit gradients through the shared FC head,
    /// the interpolation chain, and the history pass; returns feature
    /// gradients `[m, F]`. Parameter gradients accumulate across all heads
    /// and steps because every step shares the same cell and head.
    pub fn sequence_backward(
        &self,
        run: &SequenceRun,
        dlogits: &[Vec<f64>],
        grads: &mut PredictorGrads,
    ) -> Vec<f64> {
        let (m, f_dim, hd) = (self.history_len, self.pre.feature_dim, self.hidden);
        let steps = m + self.gamma;
        let mut dfeat = vec![0.0; m * f_dim];
        let mut dh_rec = vec![0.0; hd];
        let mut dc_rec = vec![0.0; hd];
        let mut dh_input = vec![0.0; hd];
        for s in (0..steps).rev() {
            let mut dh_s = dh_rec.clone();
            axpy(&mut dh_s, 1.0, &dh_input);
            if s >= m {
                let dfc = self.fc.backward(
                    &run.h_out[s],
                    &dlogits[s - m],
                    &mut grads.fc_w,
                    &mut grads.fc_b,
                );
                axpy(&mut dh_s, 1.0, &dfc);
            }
            let (dx, dh_prev, dc_prev) = self.lstm.backward_step(
                &run.caches[s],
                &dh_s,
                &dc_rec,
                &mut grads.lstm_w,
                &mut grads.lstm_u,
                &mut grads.lstm_b,
            );
            dh_rec = dh_prev;
            dc_rec = dc_prev;
            if s > m {
                dh_input = dx;
            } else {
                dh_input.iter_mut().for_each(|v| *v = 0.0);
                let slot = if s == m { m - 1 } else { s };
                axpy(&mut dfeat[slot * f_dim..(slot + 1) * f_dim], 1.0, &dx);
            }
        }
        dfeat
    }

    /// Loss and logit gradients for one sample's `Gamma` heads against the
    /// integer labels; `weight` scales each head's contribution.
    pub fn head_loss_and_grads(
        &self,
        run: &SequenceRun,
        labels: &[u16],
        weight: f64,
    ) -> (f64, Vec<Vec<f64>>) {
        debug_assert_eq!(labels.len(), self.gamma);
        let mut loss = 0.0;
        let mut dlogits = Vec::with_capacity(self.gamma);
        for (g, &label) in labels.iter().enumerate() {
            let mut d = vec![0.0; self.num_beams];
            loss += cross_entropy_grad_row(&run.probs[g], label as usize, weight, &mut d);
            dlogits.push(d);
        }
        (loss, dlogits)
    }

    /// Inference: `Gamma` probability vectors from one raw history
    /// `[m, 2, width]` (batch-norm uses running statistics).
    pub fn forward_infer(&self, history: &[f64]) -> Result<Vec<Vec<f64>>> {
        if history.len() != self.history_elems() {
            return Err(Error::shape(format!(
                "history has {} values, expected {} (m x 2 x width)",
                history.len(),
                self.history_elems()
            )));
        }
        let feats = self.pre.features_infer(history, self.history_len)?;
        Ok(self.sequence_forward(&feats).probs)
    }

    /// Full prediction at a beam-training instant: computes the timing
    /// offset, picks the nearest interpolation slot, and ranks all beams.
    pub fn predict(&self, history: &[f64], ctx: &TimingContext) -> Result<PredictionOutput> {
        let eta = timing_offset(ctx)?;
        let probabilities = self.forward_infer(history)?;
        let gamma_used = interpolation_index(eta, self.gamma);
        let head = &probabilities[gamma_used - 1];
        Ok(PredictionOutput {
            chosen_beam: argmax_lowest(head),
            ranked: rank_descending(head),
            gamma_used,
            probabilities,
        })
    }

    /// Learnable arrays in canonical order (matches [`PredictorGrads`]).
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.pre.bn.scale,
            &mut self.pre.bn.shift,
            &mut self.pre.conv1.kernels,
            &mut self.pre.conv1.bias,
            &mut self.pre.conv2.kernels,
            &mut self.pre.conv2.bias,
            &mut self.lstm.w,
            &mut self.lstm.u,
            &mut self.lstm.b,
            &mut self.fc.w,
            &mut self.fc.b,
        ]
    }

    fn checkpoint_arrays(&self) -> Vec<(&'static str, Vec<f64>)> {
        vec![
            ("bn_scale", self.pre.bn.scale.values().to_vec()),
            ("bn_shift", self.pre.bn.shift.values().to_vec()),
            ("bn_running_mean", self.pre.bn.running_mean.clone()),
            ("bn_running_var", self.pre.bn.running_var.clone()),
            ("conv1_kernels", self.pre.conv1.kernels.values().to_vec()),
            ("conv1_bias", self.pre.conv1.bias.values().to_vec()),
            ("conv2_kernels", self.pre.conv2.kernels.values().to_vec()),
            ("conv2_bias", self.pre.conv2.bias.values().to_vec()),
            ("lstm_w", self.lstm.w.values().to_vec()),
            ("lstm_u", self.lstm.u.values().to_vec()),
            ("lstm_b", self.lstm.b.values().to_vec()),
            ("fc_w", self.fc.w.values().to_vec()),
            ("fc_b", self.fc.b.values().to_vec()),
        ]
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let arrays = self.checkpoint_arrays();
        let refs: Vec<(&str, &[f64])> = arrays.iter().map(|(n, d)| (*n, d.as_slice())).collect();
        let header = CheckpointHeader {
            kind: ModelKind::GroupedLstm,
            layers: self.layers.clone(),
            history_len: self.history_len,
            interpolation_factor: self.gamma,
            num_beams: self.num_beams,
            input_width: self.pre.input_width,
        };
        save_checkpoint(path, &header, &refs)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let (header, arrays) = load_checkpoint(path)?;
        if header.kind != ModelKind::GroupedLstm {
            return Err(Error::CorruptFile("checkpoint holds a different model kind".into()));
        }
        let cfg = PredictorConfig {
            history_len: header.history_len,
            interpolation_factor: header.interpolation_factor,
            num_beams: header.num_beams,
            layers: header.layers.clone(),
        };
        let mut model = BeamPredictor::new(&cfg, header.input_width, 0)?;
        let expected: Vec<&'static str> = model.checkpoint_arrays().iter().map(|(n, _)| *n).collect();
        if arrays.len() != expected.len() {
            return Err(Error::CorruptFile("unexpected checkpoint array count".into()));
        }
        for ((name, data), expect) in arrays.iter().zip(expected) {
            if name != expect {
                return Err(Error::CorruptFile(format!(
                    "checkpoint array {name} where {expect} was expected"
                )));
            }
            let dst: &mut Vec<f64> = match name.as_str() {
                "bn_running_mean" => &mut model.pre.bn.running_mean,
                "bn_running_var" => &mut model.pre.bn.running_var,
                _ => {
                    let param: &mut Param = match name.as_str() {
                        "bn_scale" => &mut model.pre.bn.scale,
                        "bn_shift" => &mut model.pre.bn.shift,
                        "conv1_kernels" => &mut model.pre.conv1.kernels,
                        "conv1_bias" => &mut model.pre.conv1.bias,
                        "conv2_kernels" => &mut model.pre.conv2.kernels,
                        "conv2_bias" => &mut model.pre.conv2.bias,
                        "lstm_w" => &mut model.lstm.w,
                        "lstm_u" => &mut model.lstm.u,
                        "lstm_b" => &mut model.lstm.b,
                        "fc_w" => &mut model.fc.w,
                        "fc_b" => &mut model.fc.b,
                        _ => unreachable!(),
                    };
                    if param.len() != data.len() {
                        return Err(Error::CorruptFile(format!("array {name} has wrong length")));
                    }
                    param.values_mut().copy_from_slice(data);
                    continue;
                }
            };
            if dst.len() != data.len() {
                return Err(Error::CorruptFile(format!("array {name} has wrong length")));
            }
            dst.copy_from_slice(data);
        }
        Ok(model)
    }
}

#[cfg(test)]
pub(crate) fn toy_predictor_config(m: usize, gamma: usize) -> (PredictorConfig, usize) {
    use crate::tensornet::LayerKind;
    let mk = |kind, i, o, k, s| LayerSpec {
        kind,
        in_channels: i,
        out_channels: o,
        kernel_size: k,
        stride: s,
    };
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
    (
        PredictorConfig { history_len: m, interpolation_factor: gamma, num_beams: 4, layers },
        4, // input width
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_model(m: usize, gamma: usize, seed: u64) -> BeamPredictor {
        let (cfg, width) = toy_predictor_config(m, gamma);
        BeamPredictor::new(&cfg, width, seed).unwrap()
    }

    fn random_history(model: &BeamPredictor, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..model.history_elems()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn forward_produces_gamma_distributions() {
        let model = toy_model(3, 4, 1);
        let h = random_history(&model, 2);
        let probs = model.forward_infer(&h).unwrap();
        assert_eq!(probs.len(), 4);
        for p in &probs {
            assert_eq!(p.len(), 4);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn gamma_one_degenerates_to_single_head() {
        let model = toy_model(2, 1, 3);
        let h = random_history(&model, 4);
        assert_eq!(model.forward_infer(&h).unwrap().len(), 1);
    }

    #[test]
    fn wrong_history_length_is_rejected() {
        let model = toy_model(3, 2, 5);
        assert!(model.forward_infer(&[0.0; 7]).is_err());
    }

    #[test]
    fn predict_composes_timing_and_argmax() {
        let model = toy_model(2, 4, 7);
        let h = random_history(&model, 8);
        let ctx = TimingContext::new(0.2, 1.0, 1.11);
        let out = model.predict(&h, &ctx).unwrap();
        let eta = 0.55;
        assert_eq!(out.gamma_used, interpolation_index(eta, 4));
        let head = &out.probabilities[out.gamma_used - 1];
        assert_eq!(out.chosen_beam, argmax_lowest(head));
        assert_eq!(out.ranked.len(), 4);
        assert_eq!(out.ranked[0], out.chosen_beam);
        // Ranked list is sorted by descending probability.
        for w in out.ranked.windows(2) {
            assert!(head[w[0]] >= head[w[1]]);
        }
    }

    #[test]
    fn permuting_fc_rows_permutes_probabilities() {
        let mut model = toy_model(2, 2, 9);
        let h = random_history(&model, 10);
        let base = model.forward_infer(&h).unwrap();
        // Swap beam rows 0 and 3 of the FC head.
        let (in_dim, _) = (model.fc.in_dim, model.fc.out_dim);
        for k in 0..in_dim {
            let w = model.fc.w.values_mut();
            w.swap(k, 3 * in_dim + k);
        }
        model.fc.b.values_mut().swap(0, 3);
        let permuted = model.forward_infer(&h).unwrap();
        for (b, p) in base.iter().zip(&permuted) {
            assert!((b[0] - p[3]).abs() < 1e-12);
            assert!((b[3] - p[0]).abs() < 1e-12);
            assert!((b[1] - p[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let model = toy_model(3, 2, 11);
        let h = random_history(&model, 12);
        let before = model.forward_infer(&h).unwrap();
        let dir = std::env::temp_dir().join(format!("beamsim-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("toy.ckpt");
        model.save(&path).unwrap();
        let loaded = BeamPredictor::load(&path).unwrap();
        let after = loaded.forward_infer(&h).unwrap();
        assert_eq!(before, after);
        // Re-saving is byte-identical.
        let path2 = dir.join("toy2.ckpt");
        loaded.save(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
        std::fs::remove_dir_all(&dir).ok();
    }
}
