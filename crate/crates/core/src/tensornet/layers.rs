//! Layer forward/backward kernels.
//!
//! Layers operate on flat row-major `f64` slices with explicit dimensions;
//! callers hold the activations and pass them back for the backward pass.
//! Parameter gradients are accumulated into caller-provided buffers so that
//! per-sample work can run on independent buffers and be reduced in a fixed
//! order afterwards.

use rand::Rng;

use crate::error::Error;
use crate::tensornet::math::{axpy, dot, matvec, matvec_t_acc, outer_acc, sigmoid};
use crate::tensornet::{conv_out_len, Param, Tensor};
use crate::Result;

fn init_uniform(rng: &mut impl Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Per-channel batch normalization over `[batch, C, L]` inputs.
///
/// Training-mode statistics are plain (biased) moments over `batch * L`
/// elements per channel; running statistics use momentum 0.1. The layer heads
/// every stack here, so its input gradient is never propagated — backward
/// only produces scale/shift gradients.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub scale: Param,
    pub shift: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
    pub channels: usize,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    /// Normalized input before scale/shift, same layout as the input.
    pub x_hat: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            scale: Param::new(vec![channels], vec![1.0; channels]).expect("bn scale"),
            shift: Param::new(vec![channels], vec![0.0; channels]).expect("bn shift"),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
            channels,
        }
    }

    /// Per-channel mean and (biased) variance over a `[batch, C, L]` block.
    pub fn batch_stats(&self, x: &[f64], batch: usize, len: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if batch == 0 {
            return Err(Error::invalid("batch normalization over an empty batch".to_string()));
        }
        let c = self.channels;
        debug_assert_eq!(x.len(), batch * c * len);
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        let denom = (batch * len) as f64;
        for b in 0..batch {
            for ch in 0..c {
                let base = (b * c + ch) * len;
                for t in 0..len {
                    mean[ch] += x[base + t];
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= denom);
        for b in 0..batch {
            for ch in 0..c {
                let base = (b * c + ch) * len;
                for t in 0..len {
                    let d = x[base + t] - mean[ch];
                    var[ch] += d * d;
                }
            }
        }
        var.iter_mut().for_each(|v| *v /= denom);
        Ok((mean, var))
    }

    pub fn update_running(&mut self, mean: &[f64], var: &[f64]) {
        for ch in 0..self.channels {
            self.running_mean[ch] = (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
            self.running_var[ch] = (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var[ch];
        }
    }

    /// Normalizes with the given statistics and applies scale/shift.
    pub fn normalize(
        &self,
        x: &[f64],
        batch: usize,
        len: usize,
        mean: &[f64],
        var: &[f64],
    ) -> (Vec<f64>, BnCache) {
        let c = self.channels;
        let mut y = vec![0.0; x.len()];
        let mut x_hat = vec![0.0; x.len()];
        let scale = self.scale.values();
        let shift = self.shift.values();
        for b in 0..batch {
            for ch in 0..c {
                let inv_std = 1.0 / (var[ch] + self.eps).sqrt();
                let base = (b * c + ch) * len;
                for t in 0..len {
                    let xh = (x[base + t] - mean[ch]) * inv_std;
                    x_hat[base + t] = xh;
                    y[base + t] = scale[ch] * xh + shift[ch];
                }
            }
        }
        (y, BnCache { x_hat })
    }

    /// Single-call forward. Train mode uses batch statistics and updates the
    /// running ones; infer mode is deterministic given running statistics.
    pub fn forward(
        &mut self,
        x: &[f64],
        batch: usize,
        len: usize,
        mode: BnMode,
    ) -> Result<(Vec<f64>, BnCache)> {
        match mode {
            BnMode::Train => {
                let (mean, var) = self.batch_stats(x, batch, len)?;
                self.update_running(&mean, &var);
                Ok(self.normalize(x, batch, len, &mean, &var))
            }
            BnMode::Infer => {
                if batch == 0 {
                    return Err(Error::invalid("batch normalization over an empty batch"));
                }
                let (mean, var) = (self.running_mean.clone(), self.running_var.clone());
                Ok(self.normalize(x, batch, len, &mean, &var))
            }
        }
    }

    /// Accumulates scale/shift gradients; the input gradient is not needed.
    pub fn backward(
        &self,
        gout: &[f64],
        cache: &BnCache,
        batch: usize,
        len: usize,
        gscale: &mut [f64],
        gshift: &mut [f64],
    ) {
        let c = self.channels;
        for b in 0..batch {
            for ch in 0..c {
                let base = (b * c + ch) * len;
                for t in 0..len {
                    gscale[ch] += gout[base + t] * cache.x_hat[base + t];
                    gshift[ch] += gout[base + t];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 1-D convolution (cross-correlation, no padding)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Conv1d {
    /// `[C_out, C_in, K]`
    pub kernels: Param,
    /// `[C_out]`
    pub bias: Param,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_size: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel_size;
        let k = init_uniform(rng, out_channels * fan_in, fan_in);
        let b = init_uniform(rng, out_channels, fan_in);
        Conv1d {
            kernels: Param::new(vec![out_channels, in_channels, kernel_size], k).expect("conv k"),
            bias: Param::new(vec![out_channels], b).expect("conv b"),
            in_channels,
            out_channels,
            kernel_size,
            stride,
        }
    }

    pub fn out_len(&self, l_in: usize) -> Result<usize> {
        conv_out_len(l_in, self.kernel_size, self.stride)
    }

    /// `[batch, C_in, L]` -> `[batch, C_out, L_out]`
    pub fn forward(&self, x: &[f64], batch: usize, l_in: usize) -> Result<(Vec<f64>, usize)> {
        let l_out = self.out_len(l_in)?;
        let (ci, co, k, s) = (self.in_channels, self.out_channels, self.kernel_size, self.stride);
        debug_assert_eq!(x.len(), batch * ci * l_in);
        let w = self.kernels.values();
        let bias = self.bias.values();
        let mut y = vec![0.0; batch * co * l_out];
        for b in 0..batch {
            let xb = &x[b * ci * l_in..(b + 1) * ci * l_in];
            let yb = &mut y[b * co * l_out..(b + 1) * co * l_out];
            for oc in 0..co {
                let wk = &w[oc * ci * k..(oc + 1) * ci * k];
                for t in 0..l_out
                {
                    let start = t * s;
                    let mut acc = bias[oc];
                    for ic in 0..ci {
                        acc += dot(&wk[ic * k..(ic + 1) * k], &xb[ic * l_in + start..ic * l_in + start + k]);
                    }
                    yb[oc * l_out + t] = acc;
                }
            }
        }
        Ok((y, l_out))
    }

    /// Accumulates kernel/bias gradients and returns the input gradient.
    pub fn backward(
        &self,
        x: &[f64],
        batch: usize,
        l_in: usize,
        l_out: usize,
        gout: &[f64],
        gk: &mut [f64],
        gb: &mut [f64],
    ) -> Vec<f64> {
        let (ci, co, k, s) = (self.in_channels, self.out_channels, self.kernel_size, self.stride);
        let w = self.kernels.values();
        let mut dx = vec![0.0; batch * ci * l_in];
        for b in 0..batch {
            let xb = &x[b * ci * l_in..(b + 1) * ci * l_in];
            let gob = &gout[b * co * l_out..(b + 1) * co * l_out];
            let dxb = &mut dx[b * ci * l_in..(b + 1) * ci * l_in];
            for oc in 0..co {
                let wk = &w[oc * ci * k..(oc + 1) * ci * k];
                let gkk = &mut gk[oc * ci * k..(oc + 1) * ci * k];
                for t in 0..l_out {
                    let g = gob[oc * l_out + t];
                    if g == 0.0 {
                        continue;
                    }
                    gb[oc] += g;
                    let start = t * s;
                    for ic in 0..ci {
                        axpy(
                            &mut gkk[ic * k..(ic + 1) * k],
                            g,
                            &xb[ic * l_in + start..ic * l_in + start + k],
                        );
                        axpy(
                            &mut dxb[ic * l_in + start..ic * l_in + start + k],
                            g,
                            &wk[ic * k..(ic + 1) * k],
                        );
                    }
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// ReLU and global max pooling
// ---------------------------------------------------------------------------

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Backward through ReLU given the forward *output*.
pub fn relu_backward(y: &[f64], gout: &[f64]) -> Vec<f64> {
    y.iter().zip(gout).map(|(&yv, &g)| if yv > 0.0 { g } else { 0.0 }).collect()
}

/// Max over the length dimension: `[batch, C, L]` -> `[batch, C]`.
/// Ties keep the earliest position.
pub fn max_pool_forward(x: &[f64], batch: usize, channels: usize, len: usize) -> (Vec<f64>, Vec<usize>) {
    debug_assert!(len >= 1);
    let mut y = vec![0.0; batch * channels];
    let mut arg = vec![0usize; batch * channels];
    for b in 0..batch {
        for ch in 0..channels {
            let base = (b * channels + ch) * len;
            let (mut best, mut best_t) = (x[base], 0usize);
            for t in 1..len {
                if x[base + t] > best {
                    best = x[base + t];
                    best_t = t;
                }
            }
            y[b * channels + ch] = best;
            arg[b * channels + ch] = best_t;
        }
    }
    (y, arg)
}

pub fn max_pool_backward(
    gout: &[f64],
    arg: &[usize],
    batch: usize,
    channels: usize,
    len: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; batch * channels * len];
    for i in 0..batch * channels {
        dx[i * len + arg[i]] = gout[i];
    }
    dx
}

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

/// Single LSTM cell with fused gate matrices in `[input, forget, cell, output]`
/// order: gates = sigma/tanh(W x + U h_prev + b), c = f.c_prev + i.g,
/// h = o.tanh(c).
#[derive(Debug, Clone)]
pub struct LstmCell {
    /// `[4H, D]` input weights
    pub w: Param,
    /// `[4H, H]` recurrent weights
    pub u: Param,
    /// `[4H]` bias
    pub b: Param,
    pub input_dim: usize,
    pub hidden: usize,
}

/// Everything the backward step needs, for one sample.
#[derive(Debug, Clone, Default)]
pub struct LstmStepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub gate_i: Vec<f64>,
    pub gate_f: Vec<f64>,
    pub gate_g: Vec<f64>,
    pub gate_o: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl LstmCell {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w = init_uniform(rng, 4 * hidden * input_dim, input_dim);
        let u = init_uniform(rng, 4 * hidden * hidden, hidden);
        let mut b = init_uniform(rng, 4 * hidden, hidden);
        // Forget-gate bias starts at 1 so early training keeps memory.
        for v in b.iter_mut().skip(hidden).take(hidden) {
            *v = 1.0;
        }
        LstmCell {
            w: Param::new(vec![4 * hidden, input_dim], w).expect("lstm w"),
            u: Param::new(vec![4 * hidden, hidden], u).expect("lstm u"),
            b: Param::new(vec![4 * hidden], b).expect("lstm b"),
            input_dim,
            hidden,
        }
    }

    /// One step for one sample. `h`/`c` are written in place.
    pub fn step(
        &self,
        x: &[f64],
        h_prev: &[f64],
        c_prev: &[f64],
        h: &mut [f64],
        c: &mut [f64],
    ) -> LstmStepCache {
        let hd = self.hidden;
        debug_assert_eq!(x.len(), self.input_dim);
        debug_assert_eq!(h_prev.len(), hd);
        let mut pre = vec![0.0; 4 * hd];
        matvec(&mut pre, self.w.values(), x, 4 * hd, self.input_dim);
        let u = self.u.values();
        for r in 0..4 * hd {
            pre[r] += dot(&u[r * hd..(r + 1) * hd], h_prev) + self.b.values()[r];
        }
        let mut cache = LstmStepCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            c_prev: c_prev.to_vec(),
            gate_i: vec![0.0; hd],
            gate_f: vec![0.0; hd],
            gate_g: vec![0.0; hd],
            gate_o: vec![0.0; hd],
            tanh_c: vec![0.0; hd],
        };
        for j in 0..hd {
            let i = sigmoid(pre[j]);
            let f = sigmoid(pre[hd + j]);
            let g = pre[2 * hd + j].tanh();
            let o = sigmoid(pre[3 * hd + j]);
            let cj = f * c_prev[j] + i * g;
            let tc = cj.tanh();
            c[j] = cj;
            h[j] = o * tc;
            cache.gate_i[j] = i;
            cache.gate_f[j] = f;
            cache.gate_g[j] = g;
            cache.gate_o[j] = o;
            cache.tanh_c[j] = tc;
        }
        cache
    }

    /// Batched convenience wrapper: `[batch, D]` x `[batch, H]` -> `[batch, H]`.
    pub fn step_batch(
        &self,
        x: &Tensor,
        h_prev: &Tensor,
        c_prev: &Tensor,
    ) -> Result<(Tensor, Tensor)> {
        let batch = *x
            .shape()
            .first()
            .ok_or_else(|| Error::shape("lstm input must be [batch, D]".to_string()))?;
        if x.shape() != [batch, self.input_dim]
            || h_prev.shape() != [batch, self.hidden]
            || c_prev.shape() != [batch, self.hidden]
        {
            return Err(Error::shape(format!(
                "lstm step dims: x {:?}, h {:?}, c {:?} (cell D={}, H={})",
                x.shape(),
                h_prev.shape(),
                c_prev.shape(),
                self.input_dim,
                self.hidden
            )));
        }
        let hd = self.hidden;
        let mut h = Tensor::zeros(vec![batch, hd]);
        let mut c = Tensor::zeros(vec![batch, hd]);
        for bi in 0..batch {
            let (hrow, crow) = (bi * hd, bi * hd);
            let mut hbuf = vec![0.0; hd];
            let mut cbuf = vec![0.0; hd];
            self.step(
                &x.data()[bi * self.input_dim..(bi + 1) * self.input_dim],
                &h_prev.data()[hrow..hrow + hd],
                &c_prev.data()[crow..crow + hd],
                &mut hbuf,
                &mut cbuf,
            );
            h.data_mut()[hrow..hrow + hd].copy_from_slice(&hbuf);
            c.data_mut()[crow..crow + hd].copy_from_slice(&cbuf);
        }
        Ok((h, c))
    }

    /// Backward for one step of one sample. `dh`/`dc` are the gradients
    /// flowing into this step's `h` and `c`; returns `(dx, dh_prev, dc_prev)`
    /// and accumulates parameter gradients.
    #[allow(clippy::too_many_arguments)]
    pub fn backward_step(
        &self,
        cache: &LstmStepCache,
        dh: &[f64],
        dc_in: &[f64],
        gw: &mut [f64],
        gu: &mut [f64],
        gb: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let mut d_pre = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, g, o, tc) = (
                cache.gate_i[j],
                cache.gate_f[j],
                cache.gate_g[j],
                cache.gate_o[j],
                cache.tanh_c[j],
            );
            let dc = dh[j] * o * (1.0 - tc * tc) + dc_in[j];
            d_pre[j] = dc * g * i * (1.0 - i);
            d_pre[hd + j] = dc * cache.c_prev[j] * f * (1.0 - f);
            d_pre[2 * hd + j] = dc * i * (1.0 - g * g);
            d_pre[3 * hd + j] = dh[j] * tc * o * (1.0 - o);
            dc_prev[j] = dc * f;
        }
        outer_acc(gw, &d_pre, &cache.x, 4 * hd, self.input_dim);
        outer_acc(gu, &d_pre, &cache.h_prev, 4 * hd, hd);
        axpy(gb, 1.0, &d_pre);
        let mut dx = vec![0.0; self.input_dim];
        matvec_t_acc(&mut dx, self.w.values(), &d_pre, 4 * hd, self.input_dim);
        let mut dh_prev = vec![0.0; hd];
        matvec_t_acc(&mut dh_prev, self.u.values(), &d_pre, 4 * hd, hd);
        (dx, dh_prev, dc_prev)
    }
}

// ---------------------------------------------------------------------------
// Fully connected head
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Linear {
    /// `[out, in]`
    pub w: Param,
    /// `[out]`
    pub b: Param,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let w = init_uniform(rng, out_dim * in_dim, in_dim);
        let b = init_uniform(rng, out_dim, in_dim);
        Linear {
            w: Param::new(vec![out_dim, in_dim], w).expect("fc w"),
            b: Param::new(vec![out_dim], b).expect("fc b"),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        matvec(y, self.w.values(), x, self.out_dim, self.in_dim);
        axpy(y, 1.0, self.b.values());
    }

    pub fn backward(&self, x: &[f64], gout: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        outer_acc(gw, gout, x, self.out_dim, self.in_dim);
        axpy(gb, 1.0, gout);
        let mut dx = vec![0.0; self.in_dim];
        matvec_t_acc(&mut dx, self.w.values(), gout, self.out_dim, self.in_dim);
        dx
    }
}

// ---------------------------------------------------------------------------
// Softmax + cross-entropy
// ---------------------------------------------------------------------------

/// Numerically stabilized in-place softmax of one row.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax applied independently to each row of `[batch, classes]`.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_mut(classes) {
        softmax_row(row);
    }
    out
}

/// Mean cross-entropy over the batch with one-hot labels.
///
/// Returns the loss and the row-wise softmax probabilities. Rows of `labels`
/// must be exactly one-hot.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &Tensor) -> Result<(f64, Tensor)> {
    let shape = logits.shape();
    if shape.len() != 2 || labels.shape() != shape {
        return Err(Error::shape(format!(
            "cross-entropy wants matching [batch, classes], got {:?} and {:?}",
            shape,
            labels.shape()
        )));
    }
    let (batch, classes) = (shape[0], shape[1]);
    if batch == 0 {
        return Err(Error::invalid("empty batch"));
    }
    for row in labels.data().chunks(classes) {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || zeros != classes - 1 {
            return Err(Error::invalid("labels must be one-hot rows"));
        }
    }
    let probs = softmax_rows(logits.data(), classes);
    let mut loss = 0.0;
    for (b, row) in labels.data().chunks(classes).enumerate() {
        let class = row.iter().position(|&v| v == 1.0).unwrap();
        loss -= probs[b * classes + class].max(f64::MIN_POSITIVE).ln();
    }
    let probs = Tensor::new(vec![batch, classes], probs)?;
    Ok((loss / batch as f64, probs))
}

/// Cross-entropy of one probability row against an integer label, plus the
/// logit gradient `weight * (p - onehot)` accumulated into `dlogits`.
pub fn cross_entropy_grad_row(probs: &[f64], label: usize, weight: f64, dlogits: &mut [f64]) -> f64 {
    for (j, (&p, d)) in probs.iter().zip(dlogits.iter_mut()).enumerate() {
        *d += weight * (p - if j == label { 1.0 } else { 0.0 });
    }
    -probs[label].max(f64::MIN_POSITIVE).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bn_normalizes_to_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (batch, c, l) = (16, 2, 8);
        let x: Vec<f64> = (0..batch * c * l).map(|_| rng.gen_range(-3.0..9.0)).collect();
        let mut bn = BatchNorm::new(c);
        let (y, _) = bn.forward(&x, batch, l, BnMode::Train).unwrap();
        for ch in 0..c {
            let mut vals = Vec::new();
            for b in 0..batch {
                for t in 0..l {
                    vals.push(y[(b * c + ch) * l + t]);
                }
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-6, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-5, "channel {ch} var {var}");
        }
    }

    #[test]
    fn bn_constant_channel_collapses_to_shift() {
        let mut bn = BatchNorm::new(1);
        bn.shift.values_mut()[0] = 0.7;
        let x = vec![5.0; 12];
        let (y, _) = bn.forward(&x, 3, 4, BnMode::Train).unwrap();
        for v in y {
            assert!((v - 0.7).abs() < 1e-6);
        }
    }

    #[test]
    fn bn_rejects_empty_batch() {
        let mut bn = BatchNorm::new(2);
        assert!(bn.forward(&[], 0, 4, BnMode::Train).is_err());
    }

    #[test]
    fn bn_infer_is_deterministic() {
        let mut bn = BatchNorm::new(1);
        bn.running_mean[0] = 1.0;
        bn.running_var[0] = 4.0;
        let x = vec![3.0, 5.0];
        let (a, _) = bn.forward(&x, 2, 1, BnMode::Infer).unwrap();
        let (b, _) = bn.forward(&x, 2, 1, BnMode::Infer).unwrap();
        assert_eq!(a, b);
        assert!((a[0] - (3.0 - 1.0) / (4.0_f64 + 1e-5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn conv_shapes_match_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = Conv1d::new(2, 4, 3, 3, &mut rng);
        let x = vec![0.0; 2 * 2 * 8];
        let (_, l_out) = conv.forward(&x, 2, 8).unwrap();
        assert_eq!(l_out, 2);
        let conv2 = Conv1d::new(4, 5, 1, 3, &mut rng);
        let (_, l2) = conv2.forward(&vec![0.0; 2 * 4 * 2], 2, 2).unwrap();
        assert_eq!(l2, 1);
        assert!(conv.forward(&vec![0.0; 2 * 2 * 2], 2, 2).is_err());
    }

    #[test]
    fn identity_kernel_subsamples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv1d::new(1, 1, 1, 3, &mut rng);
        conv.kernels.values_mut()[0] = 1.0;
        conv.bias.values_mut()[0] = 0.0;
        let x = vec![10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0];
        let (y, l_out) = conv.forward(&x, 1, 7).unwrap();
        assert_eq!(l_out, 3);
        assert_eq!(y, vec![10.0, 13.0, 16.0]);
    }

    #[test]
    fn lstm_zero_params_give_zero_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cell = LstmCell::new(3, 4, &mut rng);
        cell.w.values_mut().iter_mut().for_each(|v| *v = 0.0);
        cell.u.values_mut().iter_mut().for_each(|v| *v = 0.0);
        cell.b.values_mut().iter_mut().for_each(|v| *v = 0.0);
        let (mut h, mut c) = (vec![0.0; 4], vec![0.0; 4]);
        cell.step(&[1.0, -2.0, 3.0], &[0.0; 4], &[0.0; 4], &mut h, &mut c);
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_large_negative_forget_bias_wipes_memory() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hd = 4;
        let mut cell = LstmCell::new(3, hd, &mut rng);
        for j in 0..hd {
            cell.b.values_mut()[hd + j] = -60.0;
        }
        let c_prev = vec![5.0; hd];
        let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
        let cache = cell.step(&[0.3, -0.7, 0.2], &vec![0.1; hd], &c_prev, &mut h, &mut c);
        for j in 0..hd {
            let ig = cache.gate_i[j] * cache.gate_g[j];
            assert!((c[j] - ig).abs() < 1e-10, "memory should be wiped");
        }
    }

    #[test]
    fn lstm_outputs_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cell = LstmCell::new(5, 7, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let (mut h, mut c) = (vec![0.0; 7], vec![0.0; 7]);
        cell.step(&x, &vec![0.9; 7], &vec![3.0; 7], &mut h, &mut c);
        assert!(h.iter().all(|&v| v.abs() < 1.0));
    }

    #[test]
    fn lstm_step_batch_rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cell = LstmCell::new(3, 4, &mut rng);
        let x = Tensor::zeros(vec![2, 3]);
        let h = Tensor::zeros(vec![2, 5]);
        let c = Tensor::zeros(vec![2, 4]);
        assert!(cell.step_batch(&x, &h, &c).is_err());
    }

    #[test]
    fn softmax_ce_uniform_logits_is_ln_classes() {
        let logits = Tensor::new(vec![2, 32], vec![0.25; 64]).unwrap();
        let mut labels = Tensor::zeros(vec![2, 32]);
        labels.data_mut()[3] = 1.0;
        labels.data_mut()[32 + 17] = 1.0;
        let (loss, probs) = softmax_cross_entropy(&logits, &labels).unwrap();
        assert!((loss - 32.0_f64.ln()).abs() < 1e-9);
        for row in probs.data().chunks(32) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_ce_perfect_prediction_is_zero_loss() {
        let mut logits = Tensor::zeros(vec![1, 4]);
        logits.data_mut()[2] = 60.0;
        let mut labels = Tensor::zeros(vec![1, 4]);
        labels.data_mut()[2] = 1.0;
        let (loss, _) = softmax_cross_entropy(&logits, &labels).unwrap();
        assert!(loss.abs() < 1e-9);
    }

    #[test]
    fn softmax_ce_rejects_non_one_hot() {
        let logits = Tensor::zeros(vec![1, 3]);
        let labels = Tensor::new(vec![1, 3], vec![0.5, 0.5, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&logits, &labels).is_err());
        let two_hot = Tensor::new(vec![1, 3], vec![1.0, 1.0, 0.0]).unwrap();
        assert!(softmax_cross_entropy(&logits, &two_hot).is_err());
    }

    #[test]
    fn max_pool_tracks_argmax() {
        let x = vec![1.0, 5.0, 3.0, -1.0, -2.0, -3.0];
        let (y, arg) = max_pool_forward(&x, 1, 2, 3);
        assert_eq!(y, vec![5.0, -1.0]);
        assert_eq!(arg, vec![1, 0]);
        let dx = max_pool_backward(&[2.0, 7.0], &arg, 1, 2, 3);
        assert_eq!(dx, vec![0.0, 2.0, 0.0, 7.0, 0.0, 0.0]);
    }
}
