//! Minimal from-scratch tensor engine.
//!
//! Dense row-major `f64` tensors, forward/backward implementations of the
//! layers used by the beam classifier (batch norm, 1-D convolution, ReLU,
//! global max pooling, an LSTM cell, a fully connected head, softmax
//! cross-entropy), Adam, and a versioned binary checkpoint format. Gradients
//! are exact reverse-mode and are validated against central finite
//! differences in the test suite.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod math;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

pub use adam::{adam_step, AdamParams};
pub use layers::{
    softmax_cross_entropy, softmax_rows, BatchNorm, BnMode, Conv1d, Linear, LstmCell, LstmStepCache,
};

/// Dense row-major tensor with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel], grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Allocates (or keeps) the gradient slot, zeroed.
    pub fn ensure_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }
}

/// A learnable array: values, gradient, and Adam moment slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub tensor: Tensor,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
}

impl Param {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        let mut tensor = Tensor::new(shape, data)?;
        tensor.ensure_grad();
        Ok(Param { tensor, adam_m: vec![0.0; n], adam_v: vec![0.0; n] })
    }

    pub fn values(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.tensor.data_mut()
    }

    pub fn grad(&self) -> &[f64] {
        self.tensor.grad().expect("param gradient slot")
    }

    pub fn set_grad(&mut self, grad: &[f64]) {
        let slot = self.tensor.grad_mut().expect("param gradient slot");
        slot.copy_from_slice(grad);
    }

    pub fn zero_grad(&mut self) {
        self.tensor.ensure_grad();
    }

    pub fn len(&self) -> usize {
        self.tensor.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    BatchNorm,
    Conv1d,
    Relu,
    MaxPool,
    Lstm,
    FullyConnected,
    Softmax,
}

impl LayerKind {
    pub(crate) fn tag(self) -> u8 {
        match self {
            LayerKind::BatchNorm => 0,
            LayerKind::Conv1d => 1,
            LayerKind::Relu => 2,
            LayerKind::MaxPool => 3,
            LayerKind::Lstm => 4,
            LayerKind::FullyConnected => 5,
            LayerKind::Softmax => 6,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => LayerKind::BatchNorm,
            1 => LayerKind::Conv1d,
            2 => LayerKind::Relu,
            3 => LayerKind::MaxPool,
            4 => LayerKind::Lstm,
            5 => LayerKind::FullyConnected,
            6 => LayerKind::Softmax,
            _ => return None,
        })
    }
}

/// One row of the layer-stack description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default)]
    pub kernel_size: usize,
    #[serde(default)]
    pub stride: usize,
}

impl LayerSpec {
    fn plain(kind: LayerKind, channels: usize) -> Self {
        LayerSpec { kind, in_channels: channels, out_channels: channels, kernel_size: 0, stride: 0 }
    }

    fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv1d,
            in_channels: in_ch,
            out_channels: out_ch,
            kernel_size: kernel,
            stride,
        }
    }

    /// Default beam-classifier stack: BN(2) -> Conv(2->64, k3, s1) -> ReLU ->
    /// Conv(64->256, k6, s1) -> ReLU -> MaxPool -> LSTM(256->256) ->
    /// FC(256->num_beams) -> Softmax.
    ///
    /// On a width-8 input the lengths run 8 -> 6 -> 1, so every angular bin
    /// reaches the feature vector and the position of the energy peak (which
    /// is what the class encodes) survives pooling. The narrower strided
    /// variant is available as [`LayerSpec::subsampling_stack`].
    pub fn classifier_stack(num_beams: usize) -> Vec<LayerSpec> {
        Self::stack_with_convs(num_beams, (2, 64, 3, 1), (64, 256, 6, 1))
    }

    /// Strided subsampling variant: Conv(2->64, k3, s3) -> Conv(64->256, k1,
    /// s3). Validates and trains, but on a width-8 input its receptive field
    /// covers only the first three bins.
    pub fn subsampling_stack(num_beams: usize) -> Vec<LayerSpec> {
        Self::stack_with_convs(num_beams, (2, 64, 3, 3), (64, 256, 1, 3))
    }

    fn stack_with_convs(
        num_beams: usize,
        conv1: (usize, usize, usize, usize),
        conv2: (usize, usize, usize, usize),
    ) -> Vec<LayerSpec> {
        vec![
            LayerSpec::plain(LayerKind::BatchNorm, 2),
            LayerSpec::conv(conv1.0, conv1.1, conv1.2, conv1.3),
            LayerSpec::plain(LayerKind::Relu, conv1.1),
            LayerSpec::conv(conv2.0, conv2.1, conv2.2, conv2.3),
            LayerSpec::plain(LayerKind::Relu, conv2.1),
            LayerSpec::plain(LayerKind::MaxPool, conv2.1),
            LayerSpec {
                kind: LayerKind::Lstm,
                in_channels: conv2.1,
                out_channels: conv2.1,
                kernel_size: 0,
                stride: 0,
            },
            LayerSpec {
                kind: LayerKind::FullyConnected,
                in_channels: conv2.1,
                out_channels: num_beams,
                kernel_size: 0,
                stride: 0,
            },
            LayerSpec::plain(LayerKind::Softmax, num_beams),
        ]
    }

    /// Stack for the no-history baseline: same preprocessing, no LSTM.
    pub fn no_prior_stack(num_beams: usize) -> Vec<LayerSpec> {
        let mut stack = Self::classifier_stack(num_beams);
        stack.retain(|l| l.kind != LayerKind::Lstm);
        stack
    }

    pub(crate) fn digest_bytes(&self, out: &mut Vec<u8>) {
        out.push(self.kind.tag());
        out.extend_from_slice(&(self.in_channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.out_channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.kernel_size as u32).to_le_bytes());
        out.extend_from_slice(&(self.stride as u32).to_le_bytes());
    }
}

/// Resolved dimensions of a validated layer stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkDims {
    pub input_channels: usize,
    pub input_width: usize,
    pub conv1: (usize, usize, usize, usize),
    pub conv2: (usize, usize, usize, usize),
    pub feature_dim: usize,
    /// (input, hidden); absent for the no-history topology.
    pub lstm: Option<(usize, usize)>,
    pub fc: (usize, usize),
}

/// Checks a layer stack against the supported topology and propagates shapes
/// from a `(channels, width)` input. Any inconsistency is a construction-time
/// error.
pub fn resolve_stack(layers: &[LayerSpec], input_width: usize) -> Result<NetworkDims> {
    use LayerKind::*;
    let kinds: Vec<LayerKind> = layers.iter().map(|l| l.kind).collect();
    let with_lstm = [BatchNorm, Conv1d, Relu, Conv1d, Relu, MaxPool, Lstm, FullyConnected, Softmax];
    let without_lstm = [BatchNorm, Conv1d, Relu, Conv1d, Relu, MaxPool, FullyConnected, Softmax];
    let has_lstm = if kinds == with_lstm {
        true
    } else if kinds == without_lstm {
        false
    } else {
        return Err(Error::shape(format!("unsupported layer topology {kinds:?}")));
    };

    let bn = &layers[0];
    let conv1 = &layers[1];
    let conv2 = &layers[3];
    if bn.in_channels != bn.out_channels || bn.in_channels != conv1.in_channels {
        return Err(Error::shape("batch-norm channels must match the first convolution"));
    }
    for (name, conv) in [("conv1", conv1), ("conv2", conv2)] {
        if conv.kernel_size == 0 || conv.stride == 0 {
            return Err(Error::shape(format!("{name} needs kernel_size and stride >= 1")));
        }
    }
    if conv1.out_channels != conv2.in_channels {
        return Err(Error::shape("conv1 output channels must feed conv2"));
    }
    let l1 = conv_out_len(input_width, conv1.kernel_size, conv1.stride)?;
    let _l2 = conv_out_len(l1, conv2.kernel_size, conv2.stride)?;
    let feature_dim = conv2.out_channels;

    let (lstm, fc_idx) = if has_lstm {
        let lstm = &layers[6];
        if lstm.in_channels != feature_dim {
            return Err(Error::shape("LSTM input must match the pooled feature size"));
        }
        (Some((lstm.in_channels, lstm.out_channels)), 7)
    } else {
        (None, 6)
    };
    let fc = &layers[fc_idx];
    let fc_in = lstm.map_or(feature_dim, |(_, h)| h);
    if fc.in_channels != fc_in {
        return Err(Error::shape("FC input size mismatch"));
    }
    let softmax = &layers[fc_idx + 1];
    if softmax.in_channels != fc.out_channels {
        return Err(Error::shape("softmax width must match FC output"));
    }

    Ok(NetworkDims {
        input_channels: bn.in_channels,
        input_width,
        conv1: (conv1.in_channels, conv1.out_channels, conv1.kernel_size, conv1.stride),
        conv2: (conv2.in_channels, conv2.out_channels, conv2.kernel_size, conv2.stride),
        feature_dim,
        lstm,
        fc: (fc.in_channels, fc.out_channels),
    })
}

pub(crate) fn conv_out_len(len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if len < kernel {
        return Err(Error::shape(format!("input length {len} shorter than kernel {kernel}")));
    }
    Ok((len - kernel) / stride + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stack_resolves_to_expected_shapes() {
        let dims = resolve_stack(&LayerSpec::classifier_stack(32), 8).unwrap();
        assert_eq!(dims.input_channels, 2);
        assert_eq!(dims.conv1, (2, 64, 3, 1));
        assert_eq!(dims.conv2, (64, 256, 6, 1));
        assert_eq!(dims.feature_dim, 256);
        assert_eq!(dims.lstm, Some((256, 256)));
        assert_eq!(dims.fc, (256, 32));
    }

    #[test]
    fn subsampling_stack_validates() {
        // BN(2,2) -> Conv(2->64, k3, s3) -> ReLU -> Conv(64->256, k1, s3) ->
        // ReLU -> MaxPool -> LSTM(256->256) -> FC(256->32) -> Softmax.
        let stack = LayerSpec::subsampling_stack(32);
        assert_eq!(stack[1].kernel_size, 3);
        assert_eq!(stack[1].stride, 3);
        assert_eq!(stack[3].kernel_size, 1);
        assert_eq!(stack[3].stride, 3);
        let dims = resolve_stack(&stack, 8).unwrap();
        assert_eq!(dims.conv1, (2, 64, 3, 3));
        assert_eq!(dims.conv2, (64, 256, 1, 3));
        assert_eq!(dims.lstm, Some((256, 256)));
        assert_eq!(dims.fc, (256, 32));
    }

    #[test]
    fn conv_lengths_match_stack_arithmetic() {
        assert_eq!(conv_out_len(8, 3, 3).unwrap(), 2);
        assert_eq!(conv_out_len(2, 1, 3).unwrap(), 1);
        assert!(conv_out_len(2, 3, 1).is_err());
    }

    #[test]
    fn malformed_stack_is_rejected() {
        let mut layers = LayerSpec::classifier_stack(32);
        layers[3].in_channels = 32; // break conv1 -> conv2 wiring
        assert!(resolve_stack(&layers, 8).is_err());
        let mut reordered = LayerSpec::classifier_stack(32);
        reordered.swap(1, 2);
        assert!(resolve_stack(&reordered, 8).is_err());
    }

    #[test]
    fn tensor_shape_mismatch_is_error() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        assert_eq!(t.numel(), 6);
    }
}
