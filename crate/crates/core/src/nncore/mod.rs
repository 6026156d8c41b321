//! Minimal deterministic neural-network engine: 1-D convolution, average
//! and max pooling, dense layers, ReLU, softmax cross-entropy, exact
//! reverse-mode gradients, and Adam. Just enough to train the two-conv
//! balanced network and its max-pool variant, with every gradient checkable
//! against central finite differences.
//!
//! Everything runs in f64. Training is single-threaded per network so runs
//! are bit-reproducible; inference on a finished network is read-only and
//! safe to share across threads.

pub mod adam;
pub mod checkpoint;
pub mod train;

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::rng_from;
use rand::Rng;

pub use adam::{AdamConfig, OptimState};
pub use train::{train, Augment, EpochStats, TrainConfig, TrainResult};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer} ({kind}): {detail}")]
    ShapeMismatch {
        layer: usize,
        kind: &'static str,
        detail: String,
    },
    #[error("input shape ({0}, {1}) does not match network input ({2}, {3})")]
    BadInput(usize, usize, usize, usize),
    #[error("softmax is only supported on the final layer")]
    MidNetworkSoftmax,
    #[error("network must end in a softmax layer to train against labels")]
    MissingSoftmaxHead,
    #[error("target class {target} outside {classes} output classes")]
    BadTarget { target: usize, classes: usize },
    #[error("non-finite gradient at parameter {0}; aborting optimization")]
    NonFiniteGradient(usize),
    #[error("parameter/gradient length mismatch: {params} vs {grads}")]
    GradientShape { params: usize, grads: usize },
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
    #[error("training split must contain at least 2 classes")]
    SingleClassSplit,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("dataset inputs and labels differ in length: {inputs} vs {labels}")]
    LabelMismatch { inputs: usize, labels: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint io on {path}: {source}")]
    CheckpointIo {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Channels-by-length grid of real values, the unit flowing between layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1D {
    pub channels: usize,
    pub length: usize,
    pub data: Vec<f64>,
}

impl Tensor1D {
    pub fn zeros(channels: usize, length: usize) -> Self {
        Tensor1D {
            channels,
            length,
            data: vec![0.0; channels * length],
        }
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        Tensor1D {
            channels: 1,
            length: samples.len(),
            data: samples.to_vec(),
        }
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.length..(c + 1) * self.length]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.length..(c + 1) * self.length]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

/// One layer of the chain. Convolutions are stride-1 cross-correlations
/// with symmetric zero padding; pools use an explicit stride.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        out_channels: usize,
        kernel: usize,
        padding: usize,
        activation: Activation,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        out_units: usize,
        activation: Activation,
    },
}

impl LayerSpec {
    fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::AvgPool { .. } => "avgpool",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
        }
    }

    fn activation(&self) -> Activation {
        match self {
            LayerSpec::Conv1d { activation, .. } | LayerSpec::Dense { activation, .. } => {
                *activation
            }
            _ => Activation::None,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ParamSlot {
    weights: Range<usize>,
    bias: Range<usize>,
}

/// A layer chain plus its flat parameter vector.
#[derive(Debug, Clone)]
pub struct Network {
    input_channels: usize,
    input_length: usize,
    specs: Vec<LayerSpec>,
    shapes: Vec<(usize, usize)>,
    slots: Vec<ParamSlot>,
    params: Vec<f64>,
}

impl Network {
    /// Build a network with seeded uniform He-style (fan-in) initialization.
    pub fn new(
        input_channels: usize,
        input_length: usize,
        specs: Vec<LayerSpec>,
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut net = Self::with_zero_params(input_channels, input_length, specs)?;
        let mut rng = rng_from(seed);
        for (i, spec) in net.specs.iter().enumerate() {
            let slot = &net.slots[i];
            if slot.weights.is_empty() {
                continue;
            }
            let fan_in = match spec {
                LayerSpec::Conv1d { kernel, .. } => {
                    let in_ch = if i == 0 {
                        net.input_channels
                    } else {
                        net.shapes[i - 1].0
                    };
                    in_ch * kernel
                }
                LayerSpec::Dense { .. } => {
                    if i == 0 {
                        net.input_length
                    } else {
                        net.shapes[i - 1].1
                    }
                }
                _ => unreachable!("only conv/dense carry weights"),
            };
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut net.params[slot.weights.clone()] {
                *p = rng.random_range(-limit..limit);
            }
            // biases stay zero
        }
        Ok(net)
    }

    /// Rebuild a network around an existing parameter vector (checkpoints).
    pub fn with_params(
        input_channels: usize,
        input_length: usize,
        specs: Vec<LayerSpec>,
        params: Vec<f64>,
    ) -> Result<Self, NnError> {
        let mut net = Self::with_zero_params(input_channels, input_length, specs)?;
        if params.len() != net.params.len() {
            return Err(NnError::Checkpoint(format!(
                "parameter count {} does not match architecture count {}",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    fn with_zero_params(
        input_channels: usize,
        input_length: usize,
        specs: Vec<LayerSpec>,
    ) -> Result<Self, NnError> {
        let mut shapes = Vec::with_capacity(specs.len());
        let mut slots = Vec::with_capacity(specs.len());
        let mut offset = 0usize;
        let mut shape = (input_channels, input_length);

        for (layer, spec) in specs.iter().enumerate() {
            let err = |detail: String| NnError::ShapeMismatch {
                layer,
                kind: spec.kind(),
                detail,
            };
            if matches!(spec.activation(), Activation::Softmax) && layer + 1 != specs.len() {
                return Err(NnError::MidNetworkSoftmax);
            }
            let (out_shape, slot) = match *spec {
                LayerSpec::Conv1d {
                    out_channels,
                    kernel,
                    padding,
                    ..
                } => {
                    if kernel == 0 || out_channels == 0 {
                        return Err(err("kernel and out_channels must be >= 1".into()));
                    }
                    let padded = shape.1 + 2 * padding;
                    if padded < kernel {
                        return Err(err(format!(
                            "padded length {padded} shorter than kernel {kernel}"
                        )));
                    }
                    let out_len = padded - kernel + 1;
                    let w = out_channels * shape.0 * kernel;
                    let slot = ParamSlot {
                        weights: offset..offset + w,
                        bias: offset + w..offset + w + out_channels,
                    };
                    offset += w + out_channels;
                    ((out_channels, out_len), slot)
                }
                LayerSpec::AvgPool { kernel, stride } | LayerSpec::MaxPool { kernel, stride } => {
                    if kernel == 0 || stride == 0 {
                        return Err(err("kernel and stride must be >= 1".into()));
                    }
                    if shape.1 < kernel {
                        return Err(err(format!(
                            "length {} shorter than pool kernel {kernel}",
                            shape.1
                        )));
                    }
                    let out_len = (shape.1 - kernel) / stride + 1;
                    ((shape.0, out_len), ParamSlot::default())
                }
                LayerSpec::Flatten => ((1, shape.0 * shape.1), ParamSlot::default()),
                LayerSpec::Dense { out_units, .. } => {
                    if shape.0 != 1 {
                        return Err(err(format!(
                            "dense expects a flat input, got {} channels",
                            shape.0
                        )));
                    }
                    if out_units == 0 {
                        return Err(err("out_units must be >= 1".into()));
                    }
                    let w = out_units * shape.1;
                    let slot = ParamSlot {
                        weights: offset..offset + w,
                        bias: offset + w..offset + w + out_units,
                    };
                    offset += w + out_units;
                    ((1, out_units), slot)
                }
            };
            shapes.push(out_shape);
            slots.push(slot);
            shape = out_shape;
        }

        Ok(Network {
            input_channels,
            input_length,
            specs,
            shapes,
            slots,
            params: vec![0.0; offset],
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.input_channels, self.input_length)
    }

    /// Output shape after each layer, in order.
    pub fn layer_output_shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn output_classes(&self) -> usize {
        self.shapes.last().map(|s| s.0 * s.1).unwrap_or(0)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameter count per layer (zero for pools and flatten).
    pub fn param_counts_per_layer(&self) -> Vec<usize> {
        self.slots
            .iter()
            .map(|s| s.weights.len() + s.bias.len())
            .collect()
    }

    /// Run the chain and return the final activations (probabilities when
    /// the network ends in softmax).
    pub fn forward(&self, input: &Tensor1D) -> Result<Vec<f64>, NnError> {
        let caches = self.forward_cached(input)?;
        Ok(caches.last().expect("nonempty network").data.clone())
    }

    /// Forward pass keeping every layer output; index 0 is the input.
    fn forward_cached(&self, input: &Tensor1D) -> Result<Vec<Tensor1D>, NnError> {
        if input.channels != self.input_channels || input.length != self.input_length {
            return Err(NnError::BadInput(
                input.channels,
                input.length,
                self.input_channels,
                self.input_length,
            ));
        }
        let mut outputs: Vec<Tensor1D> = Vec::with_capacity(self.specs.len() + 1);
        outputs.push(input.clone());
        for (i, spec) in self.specs.iter().enumerate() {
            let x = outputs.last().expect("at least the input");
            let y = self.forward_layer(i, spec, x);
            outputs.push(y);
        }
        Ok(outputs)
    }

    fn forward_layer(&self, index: usize, spec: &LayerSpec, x: &Tensor1D) -> Tensor1D {
        let (out_ch, out_len) = self.shapes[index];
        let mut y = Tensor1D::zeros(out_ch, out_len);
        match *spec {
            LayerSpec::Conv1d {
                out_channels,
                kernel,
                padding,
                activation,
            } => {
                let padded = pad_input(x, padding);
                let slot = &self.slots[index];
                let weights = &self.params[slot.weights.clone()];
                let bias = &self.params[slot.bias.clone()];
                for oc in 0..out_channels {
                    let out = y.channel_mut(oc);
                    out.fill(bias[oc]);
                    for ic in 0..x.channels {
                        let w = &weights[(oc * x.channels + ic) * kernel..][..kernel];
                        let xc = &padded[ic * (x.length + 2 * padding)..][..x.length + 2 * padding];
                        for (t, &wt) in w.iter().enumerate() {
                            let src = &xc[t..t + out_len];
                            for (o, &s) in out.iter_mut().zip(src) {
                                *o += wt * s;
                            }
                        }
                    }
                }
                apply_activation(activation, &mut y.data);
            }
            LayerSpec::AvgPool { kernel, stride } => {
                let inv = 1.0 / kernel as f64;
                for c in 0..x.channels {
                    let xc = x.channel(c);
                    let out = y.channel_mut(c);
                    for (j, o) in out.iter_mut().enumerate() {
                        let start = j * stride;
                        *o = xc[start..start + kernel].iter().sum::<f64>() * inv;
                    }
                }
            }
            LayerSpec::MaxPool { kernel, stride } => {
                for c in 0..x.channels {
                    let xc = x.channel(c);
                    let out = y.channel_mut(c);
                    for (j, o) in out.iter_mut().enumerate() {
                        let start = j * stride;
                        *o = xc[start..start + kernel]
                            .iter()
                            .copied()
                            .fold(f64::NEG_INFINITY, f64::max);
                    }
                }
            }
            LayerSpec::Flatten => {
                y.data.copy_from_slice(&x.data);
            }
            LayerSpec::Dense {
                out_units,
                activation,
            } => {
                let slot = &self.slots[index];
                let weights = &self.params[slot.weights.clone()];
                let bias = &self.params[slot.bias.clone()];
                let input = &x.data;
                for o in 0..out_units {
                    let row = &weights[o * input.len()..(o + 1) * input.len()];
                    y.data[o] = bias[o] + dot(row, input);
                }
                apply_activation(activation, &mut y.data);
            }
        }
        y
    }

    /// Cross-entropy loss and fresh gradients for one (input, target) pair.
    pub fn backward(&self, input: &Tensor1D, target: usize) -> Result<Vec<f64>, NnError> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_accumulate(input, target, &mut grads)?;
        Ok(grads)
    }

    /// Accumulate gradients of the softmax cross-entropy loss into `grads`
    /// and return the sample loss. The network must end in softmax.
    pub fn backward_accumulate(
        &self,
        input: &Tensor1D,
        target: usize,
        grads: &mut [f64],
    ) -> Result<f64, NnError> {
        let last = self.specs.last().ok_or(NnError::EmptyDataset)?;
        if last.activation() != Activation::Softmax {
            return Err(NnError::MissingSoftmaxHead);
        }
        let classes = self.output_classes();
        if target >= classes {
            return Err(NnError::BadTarget { target, classes });
        }
        if grads.len() != self.params.len() {
            return Err(NnError::GradientShape {
                params: self.params.len(),
                grads: grads.len(),
            });
        }

        let outputs = self.forward_cached(input)?;
        let probs = &outputs.last().expect("nonempty").data;
        let loss = -(probs[target].max(1e-300)).ln();

        // softmax + cross-entropy fuse to: d(logits) = p - onehot
        let mut delta = Tensor1D {
            channels: 1,
            length: classes,
            data: probs
                .iter()
                .enumerate()
                .map(|(i, &p)| if i == target { p - 1.0 } else { p })
                .collect(),
        };

        for (i, spec) in self.specs.iter().enumerate().rev() {
            let x = &outputs[i];
            let y = &outputs[i + 1];
            delta = self.backward_layer(i, spec, x, y, delta, grads);
        }
        Ok(loss)
    }

    /// Propagate `delta` (gradient w.r.t. this layer's post-activation or,
    /// for the final softmax, its logits) through layer `i`, accumulating
    /// parameter gradients and returning the gradient w.r.t. the input.
    fn backward_layer(
        &self,
        index: usize,
        spec: &LayerSpec,
        x: &Tensor1D,
        y: &Tensor1D,
        mut delta: Tensor1D,
        grads: &mut [f64],
    ) -> Tensor1D {
        // ReLU: post > 0 iff pre > 0, so the cached post suffices.
        if spec.activation() == Activation::Relu {
            for (d, &out) in delta.data.iter_mut().zip(&y.data) {
                if out <= 0.0 {
                    *d = 0.0;
                }
            }
        }

        match *spec {
            LayerSpec::Conv1d {
                out_channels,
                kernel,
                padding,
                ..
            } => {
                let slot = &self.slots[index];
                let weights = &self.params[slot.weights.clone()];
                let padded_len = x.length + 2 * padding;
                let padded = pad_input(x, padding);
                let out_len = y.length;

                let (head, tail) = grads.split_at_mut(slot.bias.start);
                let wgrad = &mut head[slot.weights.clone()];
                let bgrad = &mut tail[..slot.bias.len()];

                let mut dx_padded = vec![0.0f64; x.channels * padded_len];
                for oc in 0..out_channels {
                    let dout = delta.channel(oc);
                    bgrad[oc] += dout.iter().sum::<f64>();
                    for ic in 0..x.channels {
                        let base = (oc * x.channels + ic) * kernel;
                        let xc = &padded[ic * padded_len..(ic + 1) * padded_len];
                        let dxc = &mut dx_padded[ic * padded_len..(ic + 1) * padded_len];
                        for t in 0..kernel {
                            wgrad[base + t] += dot(&xc[t..t + out_len], dout);
                            axpy(&mut dxc[t..t + out_len], weights[base + t], dout);
                        }
                    }
                }
                let mut dx = Tensor1D::zeros(x.channels, x.length);
                for ic in 0..x.channels {
                    let src = &dx_padded[ic * padded_len + padding..][..x.length];
                    dx.channel_mut(ic).copy_from_slice(src);
                }
                dx
            }
            LayerSpec::AvgPool { kernel, stride } => {
                let inv = 1.0 / kernel as f64;
                let mut dx = Tensor1D::zeros(x.channels, x.length);
                for c in 0..x.channels {
                    let dout = delta.channel(c);
                    let dxc = dx.channel_mut(c);
                    for (j, &d) in dout.iter().enumerate() {
                        let start = j * stride;
                        for slot in &mut dxc[start..start + kernel] {
                            *slot += d * inv;
                        }
                    }
                }
                dx
            }
            LayerSpec::MaxPool { kernel, stride } => {
                let mut dx = Tensor1D::zeros(x.channels, x.length);
                for c in 0..x.channels {
                    let xc = x.channel(c);
                    let dout = delta.channel(c);
                    let dxc = dx.channel_mut(c);
                    for (j, &d) in dout.iter().enumerate() {
                        let start = j * stride;
                        // first-max tie rule keeps the routing deterministic
                        let mut arg = start;
                        let mut best = xc[start];
                        for (off, &v) in xc[start..start + kernel].iter().enumerate().skip(1) {
                            if v > best {
                                best = v;
                                arg = start + off;
                            }
                        }
                        dxc[arg] += d;
                    }
                }
                dx
            }
            LayerSpec::Flatten => Tensor1D {
                channels: x.channels,
                length: x.length,
                data: std::mem::take(&mut delta.data),
            },
            LayerSpec::Dense { out_units, .. } => {
                let slot = &self.slots[index];
                let weights = &self.params[slot.weights.clone()];
                let in_len = x.data.len();

                let mut dx = Tensor1D::zeros(1, in_len);
                for o in 0..out_units {
                    let d = delta.data[o];
                    grads[slot.bias.start + o] += d;
                    let wrow = &weights[o * in_len..(o + 1) * in_len];
                    let grow = &mut grads[slot.weights.start + o * in_len
                        ..slot.weights.start + (o + 1) * in_len];
                    axpy(grow, d, &x.data);
                    axpy(&mut dx.data, d, wrow);
                }
                dx
            }
        }
    }
}

fn pad_input(x: &Tensor1D, padding: usize) -> Vec<f64> {
    if padding == 0 {
        return x.data.clone();
    }
    let padded_len = x.length + 2 * padding;
    let mut out = vec![0.0f64; x.channels * padded_len];
    for c in 0..x.channels {
        out[c * padded_len + padding..c * padded_len + padding + x.length]
            .copy_from_slice(x.channel(c));
    }
    out
}

fn apply_activation(activation: Activation, data: &mut [f64]) {
    match activation {
        Activation::Relu => {
            for v in data.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Activation::Softmax => softmax_in_place(data),
        Activation::None => {}
    }
}

/// Numerically stable softmax.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Dot product with four independent accumulators; deterministic order,
/// fast enough for the wide dense layers that dominate training.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let mut acc = [0.0f64; 4];
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in chunks * 4..a.len() {
        sum += a[j] * b[j];
    }
    sum
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
