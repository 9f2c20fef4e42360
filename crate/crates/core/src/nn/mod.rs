//! A small feed-forward network engine on 64-bit floats.
//!
//! Models are a flat parameter vector plus an ordered list of layers; every layer
//! kind has an exact backward pass, so gradients match finite differences to
//! rounding error.

mod adam;
mod layers;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use tensor::Tensor;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::rng::{derive_seed, Prng};

/// Stream tag for weight initialization draws.
pub const INIT_STREAM: u64 = 0x1417;

/// Largest activation, in values, a micro-batch may produce. Batches are split so
/// intermediate buffers stay small enough to be recycled by the allocator.
const MICRO_BATCH_VALUES: usize = 16 * 1024;

#[derive(Clone, Debug, PartialEq)]
pub enum NnError {
    InvalidSpec(String),
    /// Input or intermediate shape does not fit the named layer (`None` = model input).
    Shape { layer: Option<usize>, expected: Vec<usize>, found: Vec<usize> },
    NonFinite { layer: usize },
    NonFiniteGradient { index: usize },
    LengthMismatch { expected: usize, found: usize },
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidSpec(m) => write!(f, "invalid model spec: {m}"),
            Self::Shape { layer: Some(l), expected, found } => {
                write!(f, "layer {l}: expected input shape {expected:?}, found {found:?}")
            }
            Self::Shape { layer: None, expected, found } => {
                write!(f, "model input: expected shape {expected:?}, found {found:?}")
            }
            Self::NonFinite { layer } => write!(f, "layer {layer} produced a non-finite value"),
            Self::NonFiniteGradient { index } => write!(f, "gradient component {index} is not finite"),
            Self::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
        }
    }
}

impl core::error::Error for NnError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LayerSpec {
    /// Affine map `y = W x + b` with `W` stored row-major as `[outputs][inputs]`.
    Dense { inputs: usize, outputs: usize },
    /// Cross-correlation with zero "same" padding; kernel stored `[out][in][k][k]`.
    Conv2d { in_channels: usize, out_channels: usize, kernel: usize },
    /// Non-overlapping `size`×`size` max pooling, trailing rows/columns dropped.
    MaxPool { size: usize },
    Flatten,
    Relu,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            Self::Dense { inputs, outputs } => inputs * outputs + outputs,
            Self::Conv2d { in_channels, out_channels, kernel } => {
                kernel * kernel * in_channels * out_channels + out_channels
            }
            Self::MaxPool { .. } | Self::Flatten | Self::Relu => 0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>, NnError> {
        let mismatch = |expected: Vec<usize>| NnError::Shape {
            layer: Some(index),
            expected,
            found: input.to_vec(),
        };
        match *self {
            Self::Dense { inputs, outputs } => {
                if input != [inputs] {
                    return Err(mismatch(vec![inputs]));
                }
                Ok(vec![outputs])
            }
            Self::Conv2d { in_channels, out_channels, kernel } => match *input {
                [c, h, w] if c == in_channels => {
                    if kernel % 2 == 0 || kernel == 0 {
                        return Err(NnError::InvalidSpec(alloc::format!(
                            "layer {index}: same-padded convolution needs an odd kernel, got {kernel}"
                        )));
                    }
                    Ok(vec![out_channels, h, w])
                }
                _ => Err(mismatch(vec![in_channels, 0, 0])),
            },
            Self::MaxPool { size } => match *input {
                [c, h, w] => {
                    if size == 0 || size > h || size > w {
                        return Err(NnError::InvalidSpec(alloc::format!(
                            "layer {index}: pool size {size} does not fit a {h}x{w} map"
                        )));
                    }
                    Ok(vec![c, h / size, w / size])
                }
                _ => Err(mismatch(vec![0, 0, 0])),
            },
            Self::Flatten => Ok(vec![input.iter().product()]),
            Self::Relu => Ok(input.to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelSpec {
    /// Shape of one sample, without the batch dimension.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Per-sample shapes after each layer; the last must be `[1]`.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        if self.layers.is_empty() {
            return Err(NnError::InvalidSpec("model has no layers".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut current = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            current = layer.output_shape(i, &current)?;
            shapes.push(current.clone());
        }
        if current != [1] {
            return Err(NnError::InvalidSpec(alloc::format!(
                "model must end in a single output, ends in {current:?}"
            )));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        self.layer_shapes().map(|_| ())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Start of each layer's parameters in the flat vector.
    pub fn param_offsets(&self) -> Vec<usize> {
        let mut offset = 0;
        self.layers
            .iter()
            .map(|l| {
                let start = offset;
                offset += l.param_count();
                start
            })
            .collect()
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }
}

/// Dense regression network with hidden width 2 and `6·n_layers − 5` parameters.
///
/// The input counts as a layer: `4→2`, then `n_layers − 3` affine maps `2→2`, then
/// `2→1`, with ReLU between affine maps. Two layers means `4→1→1`.
pub fn build_dnn(n_layers: usize) -> Result<ModelSpec, NnError> {
    let widths: Vec<usize> = match n_layers {
        0 | 1 => {
            return Err(NnError::InvalidSpec(alloc::format!(
                "a dense model needs at least 2 layers, got {n_layers}"
            )))
        }
        2 => vec![4, 1, 1],
        n => {
            let mut w = vec![4];
            w.extend(core::iter::repeat_n(2, n - 2));
            w.push(1);
            w
        }
    };
    let mut layers = Vec::with_capacity(2 * n_layers);
    for (i, pair) in widths.windows(2).enumerate() {
        if i > 0 {
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Dense { inputs: pair[0], outputs: pair[1] });
    }
    let spec = ModelSpec { input_shape: vec![4], layers };
    spec.validate()?;
    Ok(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CnnConfig {
    pub n_conv: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub input_height: usize,
    pub input_width: usize,
}

impl CnnConfig {
    /// `n_conv` 3×3 layers of two filters, 2×2 pooling, on 30×48 images.
    pub fn new(n_conv: usize) -> Self {
        Self { n_conv, filters: 2, kernel: 3, pool: 2, input_height: 30, input_width: 48 }
    }

    /// Closed-form parameter count of [`build_cnn`].
    pub fn param_count(&self) -> usize {
        let (k, f) = (self.kernel, self.filters);
        (k * k * f + f)
            + (self.n_conv - 1) * (k * k * f * f + f)
            + (self.input_height / self.pool) * (self.input_width / self.pool) * f
            + 1
    }
}

/// Convolutional regression network: `n_conv` same-padded convolutions with ReLU,
/// one max pool, flatten, and a single dense output.
pub fn build_cnn(cfg: &CnnConfig) -> Result<ModelSpec, NnError> {
    if cfg.n_conv == 0 || cfg.filters == 0 {
        return Err(NnError::InvalidSpec("need at least one convolution and one filter".into()));
    }
    let mut layers = Vec::with_capacity(2 * cfg.n_conv + 3);
    for i in 0..cfg.n_conv {
        let in_channels = if i == 0 { 1 } else { cfg.filters };
        layers.push(LayerSpec::Conv2d { in_channels, out_channels: cfg.filters, kernel: cfg.kernel });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::MaxPool { size: cfg.pool });
    layers.push(LayerSpec::Flatten);
    let pooled = (cfg.input_height / cfg.pool.max(1)) * (cfg.input_width / cfg.pool.max(1)) * cfg.filters;
    layers.push(LayerSpec::Dense { inputs: pooled, outputs: 1 });
    let spec = ModelSpec { input_shape: vec![1, cfg.input_height, cfg.input_width], layers };
    spec.validate()?;
    Ok(spec)
}

/// A model's parameters in one flat vector, laid out layer by layer (weights, then biases).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    spec: ModelSpec,
    params: Vec<f64>,
    offsets: Vec<usize>,
    seed: u64,
}

impl ModelState {
    /// Glorot-uniform weights drawn in layer order, zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = Prng::new(derive_seed(seed, INIT_STREAM));
        let mut params = Vec::with_capacity(spec.param_count());
        for layer in &spec.layers {
            let (fan_in, fan_out, weights, biases) = match *layer {
                LayerSpec::Dense { inputs, outputs } => (inputs, outputs, inputs * outputs, outputs),
                LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                    let area = kernel * kernel;
                    (in_channels * area, out_channels * area, in_channels * out_channels * area, out_channels)
                }
                _ => continue,
            };
            let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            params.extend((0..weights).map(|_| rng.uniform(-bound, bound)));
            params.extend(core::iter::repeat_n(0.0, biases));
        }
        Self::from_params(spec.clone(), params, seed)
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f64>, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(NnError::LengthMismatch { expected: spec.param_count(), found: params.len() });
        }
        let offsets = spec.param_offsets();
        Ok(Self { spec, params, offsets, seed })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn layer_params(&self, i: usize) -> &[f64] {
        let start = self.offsets[i];
        &self.params[start..start + self.spec.layers[i].param_count()]
    }

    fn check_input(&self, input: &Tensor) -> Result<usize, NnError> {
        let shape = input.shape();
        if shape.len() != self.spec.input_shape.len() + 1 || shape[1..] != self.spec.input_shape[..] {
            let mut expected = vec![0];
            expected.extend_from_slice(&self.spec.input_shape);
            return Err(NnError::Shape { layer: None, expected, found: shape.to_vec() });
        }
        Ok(shape[0])
    }

    /// Predictions of shape `(n, 1)`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check_input(input)?;
        let mut out = Vec::with_capacity(n);
        for part in self.micro_batches(input)? {
            let mut trace = self.forward_trace(&part)?;
            out.extend_from_slice(trace.activations.pop().expect("at least one layer").data());
        }
        Tensor::new(vec![n, 1], out)
    }

    /// Which ReLU units are active and which pool inputs win, for every sample. Within one
    /// pattern the network is a smooth function of its parameters, so finite differences
    /// are only meaningful between points that share it.
    pub fn activation_pattern(&self, input: &Tensor) -> Result<Vec<usize>, NnError> {
        let mut pattern = Vec::new();
        for part in self.micro_batches(input)? {
            let trace = self.forward_trace(&part)?;
            for (i, layer) in self.spec.layers.iter().enumerate() {
                match layer {
                    LayerSpec::Relu => {
                        pattern.extend(trace.activations[i].data().iter().map(|&v| usize::from(v > 0.0)))
                    }
                    LayerSpec::MaxPool { .. } => pattern.extend_from_slice(&trace.argmax[i]),
                    _ => {}
                }
            }
        }
        Ok(pattern)
    }

    /// Splits a batch into consecutive pieces whose activations fit [`MICRO_BATCH_VALUES`].
    fn micro_batches(&self, input: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let n = self.check_input(input)?;
        let widest = self
            .spec
            .layer_shapes()?
            .iter()
            .map(|s| s.iter().product::<usize>())
            .chain(core::iter::once(self.spec.input_len()))
            .max()
            .unwrap_or(1)
            .max(1);
        let size = (MICRO_BATCH_VALUES / widest).clamp(1, n.max(1));
        if size >= n {
            return Ok(vec![input.clone()]);
        }
        let row = self.spec.input_len();
        let mut parts = Vec::with_capacity(n.div_ceil(size));
        for start in (0..n).step_by(size) {
            let end = (start + size).min(n);
            let mut shape = vec![end - start];
            shape.extend_from_slice(&self.spec.input_shape);
            parts.push(Tensor::new(shape, input.data()[start * row..end * row].to_vec())?);
        }
        Ok(parts)
    }

    fn forward_trace(&self, input: &Tensor) -> Result<Trace, NnError> {
        let n = self.check_input(input)?;
        let shapes = self.spec.layer_shapes()?;
        let mut activations: Vec<Tensor> = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut argmax: Vec<Vec<usize>> = vec![Vec::new(); self.spec.layers.len()];
        activations.push(input.clone());
        let mut in_shape = self.spec.input_shape.clone();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let x = activations.last().expect("input pushed").data();
            let out_shape = &shapes[i];
            let mut full_shape = vec![n];
            full_shape.extend_from_slice(out_shape);
            let mut y = Tensor::zeros(&full_shape);
            let p = self.layer_params(i);
            match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    layers::dense_forward(p, inputs, outputs, n, x, y.data_mut())
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel } => layers::conv_forward(
                    p,
                    layers::ConvDims { cin: in_channels, cout: out_channels, k: kernel, h: in_shape[1], w: in_shape[2] },
                    n,
                    x,
                    y.data_mut(),
                ),
                LayerSpec::MaxPool { size } => {
                    argmax[i] = layers::maxpool_forward(size, n, &in_shape, x, y.data_mut())
                }
                LayerSpec::Flatten => y.data_mut().copy_from_slice(x),
                LayerSpec::Relu => layers::relu_forward(x, y.data_mut()),
            }
            if !y.is_finite() {
                return Err(NnError::NonFinite { layer: i });
            }
            activations.push(y);
            in_shape = out_shape.clone();
        }
        Ok(Trace { activations, argmax, shapes })
    }

    /// Mean squared error over the batch and its exact gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, input: &Tensor, targets: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
        let n = self.check_input(input)?;
        if n != targets.len() || n == 0 {
            return Err(NnError::LengthMismatch { expected: n, found: targets.len() });
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut sq_sum = 0.0;
        let mut start = 0;
        for part in self.micro_batches(input)? {
            let len = part.shape()[0];
            sq_sum += self.accumulate_gradient(&part, &targets[start..start + len], n, &mut grad)?;
            start += len;
        }
        Ok((sq_sum / n as f64, grad))
    }

    /// Adds the gradient of `Σ (pred − target)² / n_total` over this micro-batch into `grad`
    /// and returns its sum of squared errors.
    fn accumulate_gradient(
        &self,
        input: &Tensor,
        targets: &[f64],
        n_total: usize,
        grad: &mut [f64],
    ) -> Result<f64, NnError> {
        let trace = self.forward_trace(input)?;
        let pred = trace.activations.last().expect("output").data();
        let sq_sum: f64 = pred.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
        let n = n_total as f64;
        let mut grad_out: Vec<f64> = pred.iter().zip(targets).map(|(p, t)| 2.0 * (p - t) / n).collect();
        let batch = targets.len();
        for i in (0..self.spec.layers.len()).rev() {
            let x = trace.activations[i].data();
            let y = trace.activations[i + 1].data();
            let in_shape: &[usize] = if i == 0 { &self.spec.input_shape } else { &trace.shapes[i - 1] };
            let start = self.offsets[i];
            let count = self.spec.layers[i].param_count();
            let g = &mut grad[start..start + count];
            let p = self.layer_params(i);
            let mut grad_in = vec![0.0; x.len()];
            match self.spec.layers[i] {
                LayerSpec::Dense { inputs, outputs } => {
                    layers::dense_backward(p, inputs, outputs, batch, x, &grad_out, g, &mut grad_in)
                }
                LayerSpec::Conv2d { in_channels, out_channels, kernel } => layers::conv_backward(
                    p,
                    layers::ConvDims { cin: in_channels, cout: out_channels, k: kernel, h: in_shape[1], w: in_shape[2] },
                    batch,
                    x,
                    &grad_out,
                    g,
                    &mut grad_in,
                ),
                LayerSpec::MaxPool { .. } => layers::maxpool_backward(&trace.argmax[i], &grad_out, &mut grad_in),
                LayerSpec::Flatten => grad_in.copy_from_slice(&grad_out),
                LayerSpec::Relu => layers::relu_backward(y, &grad_out, &mut grad_in),
            }
            grad_out = grad_in;
        }
        Ok(sq_sum)
    }
}

struct Trace {
    activations: Vec<Tensor>,
    argmax: Vec<Vec<usize>>,
    shapes: Vec<Vec<usize>>,
}

/// Mean of squared differences.
pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64, NnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NnError::LengthMismatch { expected: pred.len(), found: target.len() });
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests;
