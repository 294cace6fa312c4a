//! A small feed-forward network trained from scratch with SGD.
//!
//! Activations flow as flat `f64` buffers in channel-major (`C × H × W`) order;
//! fully connected layers see their input flattened in that order. Input images
//! arrive as `H × W × C` and are transposed on entry.

use alloc::vec;
use alloc::vec::Vec;
use core::borrow::Borrow;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dims, ImageSample};
use crate::error::{config_err, shape_err, Error, Result};
use crate::matrix::FeatureMatrix;

/// One layer of the network description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum LayerSpec {
    /// Valid (unpadded) 2-D convolution with a square kernel.
    Convolution {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    /// Non-overlapping max pooling; trailing rows/columns that do not fill a
    /// window are dropped.
    MaxPool {
        window: usize,
    },
    FullyConnected {
        out_dim: usize,
    },
    Relu,
}

/// The default backbone for 28×28 and 32×32 inputs, ending in the hashing
/// layer of width `bit_width` and its ReLU.
pub fn default_layers(bit_width: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Convolution { out_channels: 8, kernel: 5, stride: 1 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2 },
        LayerSpec::Convolution { out_channels: 16, kernel: 5, stride: 1 },
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2 },
        LayerSpec::FullyConnected { out_dim: 64 },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { out_dim: bit_width },
        LayerSpec::Relu,
    ]
}

/// Activation shape between layers (channels, height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Shape {
    c: usize,
    h: usize,
    w: usize,
}

impl Shape {
    fn len(&self) -> usize {
        self.c * self.h * self.w
    }
}

/// Weights and biases of one layer. Parameter-free layers hold empty vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn empty() -> Self {
        Self { weights: Vec::new(), bias: Vec::new() }
    }

    fn zeros_like(&self) -> Self {
        Self { weights: vec![0.0; self.weights.len()], bias: vec![0.0; self.bias.len()] }
    }
}

/// Learnable parameters together with the layer chain they belong to.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    layers: Vec<LayerSpec>,
    input: Dims,
    shapes: Vec<Shape>,
    params: Vec<LayerParams>,
    bit_width: usize,
    revision: u64,
}

impl PartialEq for NetworkParams {
    /// Compares architecture and parameter values; the update counter is
    /// ignored.
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.input == other.input && self.params == other.params
    }
}

/// Checks a layer chain against the input size and returns the activation
/// shapes (input first) and the hashing-layer width.
fn plan(layers: &[LayerSpec], input: Dims) -> Result<(Vec<Shape>, usize)> {
    if input.is_empty() {
        return Err(config_err!("input dims must be non-zero, got {input:?}"));
    }
    let n = layers.len();
    let bit_width = match (n >= 2).then(|| (layers[n - 2], layers[n - 1])) {
        Some((LayerSpec::FullyConnected { out_dim }, LayerSpec::Relu)) if out_dim > 0 => out_dim,
        _ => return Err(config_err!("network must end with fully_connected(M) followed by relu")),
    };
    let mut shape = Shape { c: input.channels, h: input.height, w: input.width };
    let mut shapes = vec![shape];
    for (i, layer) in layers.iter().enumerate() {
        shape = match *layer {
            LayerSpec::Convolution { out_channels, kernel, stride } => {
                if out_channels == 0 || kernel == 0 || stride == 0 {
                    return Err(config_err!("layer {i}: convolution sizes must be positive"));
                }
                if shape.h < kernel || shape.w < kernel {
                    return Err(config_err!("layer {i}: kernel {kernel} larger than {}x{} input", shape.h, shape.w));
                }
                Shape { c: out_channels, h: (shape.h - kernel) / stride + 1, w: (shape.w - kernel) / stride + 1 }
            }
            LayerSpec::MaxPool { window } => {
                if window == 0 || shape.h < window || shape.w < window {
                    return Err(config_err!(
                        "layer {i}: pool window {window} does not fit {}x{} input",
                        shape.h,
                        shape.w
                    ));
                }
                Shape { c: shape.c, h: shape.h / window, w: shape.w / window }
            }
            LayerSpec::FullyConnected { out_dim } => {
                if out_dim == 0 {
                    return Err(config_err!("layer {i}: fully connected width must be positive"));
                }
                Shape { c: out_dim, h: 1, w: 1 }
            }
            LayerSpec::Relu => shape,
        };
        shapes.push(shape);
    }
    Ok((shapes, bit_width))
}

fn param_sizes(layer: &LayerSpec, input: Shape) -> (usize, usize) {
    match *layer {
        LayerSpec::Convolution { out_channels, kernel, .. } => (out_channels * input.c * kernel * kernel, out_channels),
        LayerSpec::FullyConnected { out_dim } => (out_dim * input.len(), out_dim),
        _ => (0, 0),
    }
}

/// Builds a network with zero biases and weights drawn uniformly from
/// `[-s, s)`, `s = sqrt(6 / fan_in)`, which gives them a standard deviation
/// of `sqrt(2 / fan_in)`.
pub fn build_network(layers: &[LayerSpec], input: Dims, seed: u64) -> Result<NetworkParams> {
    let (shapes, bit_width) = plan(layers, input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::with_capacity(layers.len());
    for (layer, shape) in layers.iter().zip(&shapes) {
        let (nw, nb) = param_sizes(layer, *shape);
        if nw == 0 {
            params.push(LayerParams::empty());
            continue;
        }
        let fan_in = nw / nb;
        let scale = libm::sqrt(6.0 / fan_in as f64);
        let dist = Uniform::new(-scale, scale).map_err(|e| config_err!("{e}"))?;
        let weights = (0..nw).map(|_| dist.sample(&mut rng)).collect();
        params.push(LayerParams { weights, bias: vec![0.0; nb] });
    }
    Ok(NetworkParams { layers: layers.to_vec(), input, shapes, params, bit_width, revision: 0 })
}

/// Per-batch cache of everything backward needs.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    revision: u64,
    /// `inputs[s][l]` is the input of layer `l` for sample `s`.
    inputs: Vec<Vec<Vec<f64>>>,
    /// Winning input position per pooled output, `argmax[s][l]`.
    argmax: Vec<Vec<Vec<u32>>>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.inputs.len()
    }

    /// Sign pattern of every ReLU input and every pool winner. Two traces with
    /// equal patterns lie on the same linear piece of the network.
    pub fn activation_pattern(&self, params: &NetworkParams) -> Vec<u32> {
        let mut out = Vec::new();
        for (inputs, argmax) in self.inputs.iter().zip(&self.argmax) {
            for (l, layer) in params.layers.iter().enumerate() {
                match layer {
                    LayerSpec::Relu => out.extend(inputs[l].iter().map(|&v| (v > 0.0) as u32)),
                    LayerSpec::MaxPool { .. } => out.extend_from_slice(&argmax[l]),
                    _ => {}
                }
            }
        }
        out
    }
}

/// Parameter gradients shaped like [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Self { layers: params.params.iter().map(LayerParams::zeros_like).collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }
}

/// 4-lane dot product; fixed summation order keeps results reproducible.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in chunks * 4..n {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl NetworkParams {
    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dims(&self) -> Dims {
        self.input
    }

    /// Width `M` of the hashing layer.
    pub fn bit_width(&self) -> usize {
        self.bit_width
    }

    /// Number of parameter updates applied since construction or load.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn layer_params(&self) -> &[LayerParams] {
        &self.params
    }

    /// Mutable access to raw parameters. Bumps the revision, so traces taken
    /// before the call become stale.
    pub fn layer_params_mut(&mut self) -> &mut [LayerParams] {
        self.revision += 1;
        &mut self.params
    }

    /// Rebuilds a network from stored parameters, validating every shape.
    pub fn from_parts(layers: Vec<LayerSpec>, input: Dims, params: Vec<LayerParams>) -> Result<Self> {
        let (shapes, bit_width) = plan(&layers, input)?;
        if params.len() != layers.len() {
            return Err(shape_err!("{} parameter blocks for {} layers", params.len(), layers.len()));
        }
        for (i, (layer, p)) in layers.iter().zip(&params).enumerate() {
            let (nw, nb) = param_sizes(layer, shapes[i]);
            if p.weights.len() != nw || p.bias.len() != nb {
                return Err(shape_err!(
                    "layer {i}: expected {nw} weights and {nb} biases, got {} and {}",
                    p.weights.len(),
                    p.bias.len()
                ));
            }
        }
        if params.iter().flat_map(|p| p.weights.iter().chain(&p.bias)).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameters contain non-finite values".into()));
        }
        Ok(Self { layers, input, shapes, params, bit_width, revision: 0 })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    fn image_to_chw(&self, image: &ImageSample) -> Result<Vec<f64>> {
        if image.dims != self.input || image.pixels.len() != self.input.len() {
            return Err(shape_err!("image dims {:?} do not match network input {:?}", image.dims, self.input));
        }
        let Dims { height, width, channels } = self.input;
        if channels == 1 {
            return Ok(image.pixels.clone());
        }
        let mut out = vec![0.0; image.pixels.len()];
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    out[(c * height + y) * width + x] = image.pixels[(y * width + x) * channels + c];
                }
            }
        }
        Ok(out)
    }

    fn layer_forward(&self, l: usize, input: &[f64], argmax: &mut Vec<u32>) -> Vec<f64> {
        let in_s = self.shapes[l];
        let out_s = self.shapes[l + 1];
        let p = &self.params[l];
        match self.layers[l] {
            LayerSpec::Convolution { kernel: k, stride: s, .. } => {
                let plane = out_s.h * out_s.w;
                let mut out = vec![0.0; out_s.len()];
                for oc in 0..out_s.c {
                    let o = &mut out[oc * plane..(oc + 1) * plane];
                    o.fill(p.bias[oc]);
                    for ic in 0..in_s.c {
                        let src = &input[ic * in_s.h * in_s.w..(ic + 1) * in_s.h * in_s.w];
                        for ky in 0..k {
                            for kx in 0..k {
                                let wv = p.weights[((oc * in_s.c + ic) * k + ky) * k + kx];
                                for oy in 0..out_s.h {
                                    let row = &src[(oy * s + ky) * in_s.w + kx..];
                                    let orow = &mut o[oy * out_s.w..(oy + 1) * out_s.w];
                                    if s == 1 {
                                        axpy(orow, wv, &row[..out_s.w]);
                                    } else {
                                        for (ox, ov) in orow.iter_mut().enumerate() {
                                            *ov += wv * row[ox * s];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                out
            }
            LayerSpec::MaxPool { window } => {
                let mut out = vec![0.0; out_s.len()];
                argmax.clear();
                argmax.resize(out_s.len(), 0);
                for c in 0..out_s.c {
                    for oy in 0..out_s.h {
                        for ox in 0..out_s.w {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_at = 0usize;
                            for dy in 0..window {
                                for dx in 0..window {
                                    let at = (c * in_s.h + oy * window + dy) * in_s.w + ox * window + dx;
                                    if input[at] > best {
                                        best = input[at];
                                        best_at = at;
                                    }
                                }
                            }
                            let o = (c * out_s.h + oy) * out_s.w + ox;
                            out[o] = best;
                            argmax[o] = best_at as u32;
                        }
                    }
                }
                out
            }
            LayerSpec::FullyConnected { out_dim } => {
                let n_in = in_s.len();
                (0..out_dim).map(|o| p.bias[o] + dot(&p.weights[o * n_in..(o + 1) * n_in], input)).collect()
            }
            LayerSpec::Relu => input.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        }
    }

    /// Runs one image through the network without caching.
    pub fn features_of(&self, image: &ImageSample) -> Result<Vec<f64>> {
        let mut act = self.image_to_chw(image)?;
        let mut scratch = Vec::new();
        for l in 0..self.layers.len() {
            act = self.layer_forward(l, &act, &mut scratch);
        }
        Ok(act)
    }

    /// Features for a batch, without caching.
    pub fn infer<S: Borrow<ImageSample>>(&self, batch: &[S]) -> Result<FeatureMatrix> {
        let mut data = Vec::with_capacity(batch.len() * self.bit_width);
        for img in batch {
            data.extend(self.features_of(img.borrow())?);
        }
        FeatureMatrix::from_vec(batch.len(), self.bit_width, data)
    }

    /// Computes `F(p)` for every image and caches activations for
    /// [`NetworkParams::backward`].
    pub fn forward<S: Borrow<ImageSample>>(&self, batch: &[S]) -> Result<(FeatureMatrix, ForwardTrace)> {
        if batch.is_empty() {
            return Err(shape_err!("forward needs a non-empty batch"));
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(batch.len());
        let mut argmaxes = Vec::with_capacity(batch.len());
        let mut data = Vec::with_capacity(batch.len() * self.bit_width);
        for img in batch {
            let mut acts = Vec::with_capacity(n_layers);
            let mut argmax = vec![Vec::new(); n_layers];
            let mut act = self.image_to_chw(img.borrow())?;
            for (l, am) in argmax.iter_mut().enumerate() {
                let next = self.layer_forward(l, &act, am);
                acts.push(act);
                act = next;
            }
            data.extend_from_slice(&act);
            inputs.push(acts);
            argmaxes.push(argmax);
        }
        let features = FeatureMatrix::from_vec(batch.len(), self.bit_width, data)?;
        Ok((features, ForwardTrace { revision: self.revision, inputs, argmax: argmaxes }))
    }

    /// Backpropagates `dL/dF` (one row per sample) and returns parameter
    /// gradients, summed over the batch.
    pub fn backward(&self, trace: ForwardTrace, grad_features: &FeatureMatrix) -> Result<Gradients> {
        if trace.revision != self.revision {
            return Err(Error::Usage(alloc::format!(
                "trace from parameter revision {} used with revision {}",
                trace.revision,
                self.revision
            )));
        }
        if trace.inputs.first().map(|s| s.len()) != Some(self.layers.len()) {
            return Err(Error::Usage("trace was produced by a different network".into()));
        }
        if grad_features.rows() != trace.batch_size() || grad_features.cols() != self.bit_width {
            return Err(shape_err!(
                "feature gradient is {}x{}, trace expects {}x{}",
                grad_features.rows(),
                grad_features.cols(),
                trace.batch_size(),
                self.bit_width
            ));
        }
        let mut grads = Gradients::zeros_like(self);
        for (s, (inputs, argmax)) in trace.inputs.iter().zip(&trace.argmax).enumerate() {
            let mut delta = grad_features.row(s).to_vec();
            for l in (0..self.layers.len()).rev() {
                let need_input_grad = l > 0;
                delta = self.layer_backward(l, &inputs[l], &argmax[l], &delta, &mut grads.layers[l], need_input_grad);
            }
        }
        Ok(grads)
    }

    fn layer_backward(
        &self,
        l: usize,
        input: &[f64],
        argmax: &[u32],
        delta: &[f64],
        grad: &mut LayerParams,
        need_input_grad: bool,
    ) -> Vec<f64> {
        let in_s = self.shapes[l];
        let out_s = self.shapes[l + 1];
        let p = &self.params[l];
        match self.layers[l] {
            LayerSpec::Convolution { kernel: k, stride: s, .. } => {
                let plane = out_s.h * out_s.w;
                let in_plane = in_s.h * in_s.w;
                let mut din = if need_input_grad { vec![0.0; in_s.len()] } else { Vec::new() };
                for oc in 0..out_s.c {
                    let d = &delta[oc * plane..(oc + 1) * plane];
                    grad.bias[oc] += d.iter().sum::<f64>();
                    for ic in 0..in_s.c {
                        let src = &input[ic * in_plane..(ic + 1) * in_plane];
                        for ky in 0..k {
                            for kx in 0..k {
                                let wi = ((oc * in_s.c + ic) * k + ky) * k + kx;
                                let wv = p.weights[wi];
                                let mut g = 0.0;
                                for oy in 0..out_s.h {
                                    let drow = &d[oy * out_s.w..(oy + 1) * out_s.w];
                                    let start = (oy * s + ky) * in_s.w + kx;
                                    if s == 1 {
                                        g += dot(drow, &src[start..start + out_s.w]);
                                        if need_input_grad {
                                            let dst = &mut din[ic * in_plane + start..ic * in_plane + start + out_s.w];
                                            axpy(dst, wv, drow);
                                        }
                                    } else {
                                        for (ox, &dv) in drow.iter().enumerate() {
                                            g += dv * src[start + ox * s];
                                            if need_input_grad {
                                                din[ic * in_plane + start + ox * s] += wv * dv;
                                            }
                                        }
                                    }
                                }
                                grad.weights[wi] += g;
                            }
                        }
                    }
                }
                din
            }
            LayerSpec::MaxPool { .. } => {
                let mut din = vec![0.0; in_s.len()];
                for (o, &d) in delta.iter().enumerate() {
                    din[argmax[o] as usize] += d;
                }
                din
            }
            LayerSpec::FullyConnected { out_dim } => {
                let n_in = in_s.len();
                let mut din = if need_input_grad { vec![0.0; n_in] } else { Vec::new() };
                for (o, &d) in delta.iter().enumerate().take(out_dim) {
                    grad.bias[o] += d;
                    if d == 0.0 {
                        continue;
                    }
                    axpy(&mut grad.weights[o * n_in..(o + 1) * n_in], d, input);
                    if need_input_grad {
                        axpy(&mut din, d, &p.weights[o * n_in..(o + 1) * n_in]);
                    }
                }
                din
            }
            LayerSpec::Relu => input.iter().zip(delta).map(|(&x, &d)| if x > 0.0 { d } else { 0.0 }).collect(),
        }
    }
}

/// Momentum SGD state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Gradients,
}

impl OptimizerState {
    pub fn new(params: &NetworkParams, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(config_err!("learning rate must be finite and non-negative, got {learning_rate}"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(config_err!("momentum must lie in [0, 1), got {momentum}"));
        }
        Ok(Self { learning_rate, momentum, velocity: Gradients::zeros_like(params) })
    }

    pub fn velocity(&self) -> &Gradients {
        &self.velocity
    }
}

/// `v = momentum * v - lr * g; params += v`.
///
/// Rejects non-finite gradients before touching anything.
pub fn sgd_step(params: &mut NetworkParams, grads: &Gradients, state: &mut OptimizerState) -> Result<()> {
    if grads.layers.len() != params.params.len()
        || state.velocity.layers.len() != params.params.len()
        || grads
            .layers
            .iter()
            .zip(&params.params)
            .any(|(g, p)| g.weights.len() != p.weights.len() || g.bias.len() != p.bias.len())
    {
        return Err(shape_err!("gradient or velocity shapes do not match parameters"));
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let (lr, mu) = (state.learning_rate, state.momentum);
    for ((p, g), v) in params.params.iter_mut().zip(&grads.layers).zip(&mut state.velocity.layers) {
        for ((pw, gw), vw) in p.weights.iter_mut().zip(&g.weights).zip(v.weights.iter_mut()) {
            *vw = mu * *vw - lr * gw;
            *pw += *vw;
        }
        for ((pb, gb), vb) in p.bias.iter_mut().zip(&g.bias).zip(v.bias.iter_mut()) {
            *vb = mu * *vb - lr * gb;
            *pb += *vb;
        }
    }
    params.revision += 1;
    Ok(())
}
