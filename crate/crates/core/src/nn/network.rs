//! Sequential networks: layer specifications, shape propagation, forward
//! and reverse passes.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::gemm::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    /// Valid padding, stride one, square kernel.
    Conv2d {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

/// `[height, width, channels]` per sample; dense outputs are `[1, 1, n]`
/// after flatten, stored as `Flat(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerShape {
    Image { height: usize, width: usize, channels: usize },
    Flat(usize),
}

impl LayerShape {
    pub fn len(&self) -> usize {
        match *self {
            LayerShape::Image {
                height,
                width,
                channels,
            } => height * width * channels,
            LayerShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shape as `[batch, ...]` dims.
    pub fn dims(&self, batch: usize) -> Vec<usize> {
        match *self {
            LayerShape::Image {
                height,
                width,
                channels,
            } => vec![batch, height, width, channels],
            LayerShape::Flat(n) => vec![batch, n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: LayerShape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Output shape after each layer, or a shape error naming the layer.
    pub fn output_shapes(&self) -> Result<Vec<LayerShape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (
                    LayerSpec::Conv2d {
                        filters, kernel, ..
                    },
                    LayerShape::Image { height, width, .. },
                ) => {
                    if kernel == 0 || kernel > height || kernel > width || filters == 0 {
                        return Err(Error::Shape(format!(
                            "layer {i}: {kernel}x{kernel} kernel does not fit {height}x{width} input"
                        )));
                    }
                    LayerShape::Image {
                        height: height - kernel + 1,
                        width: width - kernel + 1,
                        channels: filters,
                    }
                }
                (LayerSpec::Conv2d { .. }, LayerShape::Flat(_)) => {
                    return Err(Error::Shape(format!("layer {i}: convolution after flatten")))
                }
                (LayerSpec::Flatten, s) => LayerShape::Flat(s.len()),
                (LayerSpec::Dense { units, .. }, LayerShape::Flat(_)) if units > 0 => {
                    LayerShape::Flat(units)
                }
                (LayerSpec::Dense { .. }, _) => {
                    return Err(Error::Shape(format!(
                        "layer {i}: dense layer needs a flat input with at least one unit"
                    )))
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<LayerShape> {
        Ok(self.output_shapes()?.last().copied().unwrap_or(self.input))
    }

    /// Trainable parameters per layer (weights + biases).
    pub fn layer_param_counts(&self) -> Result<Vec<usize>> {
        let shapes = self.output_shapes()?;
        let mut prev = self.input;
        let mut counts = Vec::with_capacity(shapes.len());
        for (layer, &out) in self.layers.iter().zip(&shapes) {
            counts.push(match *layer {
                LayerSpec::Conv2d {
                    filters, kernel, ..
                } => {
                    let cin = match prev {
                        LayerShape::Image { channels, .. } => channels,
                        LayerShape::Flat(_) => unreachable!(),
                    };
                    kernel * kernel * cin * filters + filters
                }
                LayerSpec::Flatten => 0,
                LayerSpec::Dense { units, .. } => prev.len() * units + units,
            });
            prev = out;
        }
        Ok(counts)
    }
}

/// Total trainable parameters of `spec`.
pub fn param_count(spec: &NetworkSpec) -> Result<usize> {
    Ok(spec.layer_param_counts()?.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    weights: usize,
    n_weights: usize,
    bias: usize,
    n_bias: usize,
}

/// A network specification together with its flat parameter vector.
///
/// Each parametric layer owns a weight block followed by a bias block.
/// Convolution weights are laid out `[kernel_y, kernel_x, in, out]`, dense
/// weights `[in, out]`.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<LayerShape>,
    slots: Vec<Option<Slot>>,
    params: Vec<f64>,
    generation: u64,
}

/// Intermediates retained by [`Network::forward`] for the reverse pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    batch: usize,
    /// Input of each layer (im2col patches for convolutions).
    inputs: Vec<Vec<f64>>,
    /// Post-activation output of each layer.
    outputs: Vec<Vec<f64>>,
}

impl Network {
    /// Fresh network with He-scaled normal weights (`√(2/fan_in)` before
    /// ReLU, `√(1/fan_in)` before a linear output) and zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let shapes = spec.output_shapes()?;
        let counts = spec.layer_param_counts()?;
        let mut slots = Vec::with_capacity(counts.len());
        let mut offset = 0;
        let mut params = Vec::with_capacity(counts.iter().sum());
        let mut prev = spec.input;
        for (li, (layer, &count)) in spec.layers.iter().zip(&counts).enumerate() {
            let (fan_in, n_bias, act) = match *layer {
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    activation,
                } => {
                    let cin = match prev {
                        LayerShape::Image { channels, .. } => channels,
                        LayerShape::Flat(_) => unreachable!(),
                    };
                    (kernel * kernel * cin, filters, activation)
                }
                LayerSpec::Dense { units, activation } => (prev.len(), units, activation),
                LayerSpec::Flatten => {
                    slots.push(None);
                    prev = shapes[li];
                    continue;
                }
            };
            let n_weights = count - n_bias;
            let gain = match act {
                Activation::Relu => 2.0,
                Activation::Linear => 1.0,
            };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("valid std");
            let mut rng = stream(seed, &[li as u64]);
            params.extend((0..n_weights).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, n_bias));
            slots.push(Some(Slot {
                weights: offset,
                n_weights,
                bias: offset + n_weights,
                n_bias,
            }));
            offset += count;
            prev = shapes[li];
        }
        Ok(Self {
            spec,
            shapes,
            slots,
            params,
            generation: 0,
        })
    }

    /// Network with the given flat parameters.
    pub fn with_params(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(spec, 0)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!(
                "network needs {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameters. Any cache produced before this call becomes
    /// stale.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().copied().unwrap_or(self.spec.input).len()
    }

    /// Outputs of the whole batch plus the cache for [`Network::backward`].
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let b = batch.batch();
        let expect = self.spec.input.dims(b);
        let flat_ok = batch.len() == b * self.spec.input.len() && batch.shape().first() == Some(&b);
        if batch.shape() != expect.as_slice() && !flat_ok {
            return Err(Error::Shape(format!(
                "network input must be {:?}, got {:?}",
                expect,
                batch.shape()
            )));
        }
        let mut cache = ForwardCache {
            generation: self.generation,
            batch: b,
            inputs: Vec::with_capacity(self.spec.layers.len()),
            outputs: Vec::with_capacity(self.spec.layers.len()),
        };
        let mut cur = batch.data().to_vec();
        let mut prev = self.spec.input;
        for (li, layer) in self.spec.layers.iter().enumerate() {
            let out_shape = self.shapes[li];
            let (input, mut out, act) = match *layer {
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    activation,
                } => {
                    let slot = self.slots[li].expect("conv slot");
                    let patches = im2col(&cur, b, prev, kernel);
                    let rows = b * positions(out_shape);
                    let k = patch_len(prev, kernel);
                    let mut out = vec![0.0; rows * filters];
                    gemm(rows, k, filters, &patches, false, self.weights(slot), false, 0.0, &mut out);
                    add_bias(&mut out, self.bias(slot));
                    (patches, out, activation)
                }
                LayerSpec::Dense { units, activation } => {
                    let slot = self.slots[li].expect("dense slot");
                    let mut out = vec![0.0; b * units];
                    gemm(b, prev.len(), units, &cur, false, self.weights(slot), false, 0.0, &mut out);
                    add_bias(&mut out, self.bias(slot));
                    (cur, out, activation)
                }
                LayerSpec::Flatten => {
                    let out = cur.clone();
                    (cur, out, Activation::Linear)
                }
            };
            if act == Activation::Relu {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cache.inputs.push(input);
            cache.outputs.push(out.clone());
            cur = out;
            prev = out_shape;
        }
        let out = Tensor::new(prev.dims(b), cur)?;
        Ok((out, cache))
    }

    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        Ok(self.forward(batch)?.0)
    }

    /// Adds the parameter gradient of `Σ output_grad ⊙ output` into
    /// `grads` (same layout as [`Network::params`]).
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Tensor, grads: &mut [f64]) -> Result<()> {
        self.reverse(cache, output_grad, grads, false).map(|_| ())
    }

    /// [`Network::backward`] that also returns the gradient with respect to
    /// the network input.
    pub fn backward_input(&self, cache: &ForwardCache, output_grad: &Tensor, grads: &mut [f64]) -> Result<Vec<f64>> {
        self.reverse(cache, output_grad, grads, true)
    }

    fn reverse(&self, cache: &ForwardCache, output_grad: &Tensor, grads: &mut [f64], want_input: bool) -> Result<Vec<f64>> {
        if cache.generation != self.generation {
            return Err(Error::StaleCache);
        }
        if grads.len() != self.params.len() {
            return Err(Error::Shape("gradient buffer has the wrong length".into()));
        }
        let b = cache.batch;
        if output_grad.len() != b * self.output_len() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, expected {}",
                output_grad.len(),
                b * self.output_len()
            )));
        }
        let mut delta = output_grad.data().to_vec();
        for li in (0..self.spec.layers.len()).rev() {
            let prev = if li == 0 { self.spec.input } else { self.shapes[li - 1] };
            let out_shape = self.shapes[li];
            let out = &cache.outputs[li];
            let input = &cache.inputs[li];
            match self.spec.layers[li] {
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    activation,
                } => {
                    relu_mask(&mut delta, out, activation);
                    let slot = self.slots[li].expect("conv slot");
                    let rows = b * positions(out_shape);
                    let k = patch_len(prev, kernel);
                    let (gw, gb) = split_grads(grads, slot);
                    gemm(k, rows, filters, input, true, &delta, false, 1.0, gw);
                    sum_rows(&delta, filters, gb);
                    if li == 0 && !want_input {
                        return Ok(Vec::new());
                    }
                    let mut dpatch = vec![0.0; rows * k];
                    gemm(rows, filters, k, &delta, false, self.weights(slot), true, 0.0, &mut dpatch);
                    delta = col2im(&dpatch, b, prev, kernel);
                }
                LayerSpec::Dense { units, activation } => {
                    relu_mask(&mut delta, out, activation);
                    let slot = self.slots[li].expect("dense slot");
                    let n_in = prev.len();
                    let (gw, gb) = split_grads(grads, slot);
                    gemm(n_in, b, units, input, true, &delta, false, 1.0, gw);
                    sum_rows(&delta, units, gb);
                    if li == 0 && !want_input {
                        return Ok(Vec::new());
                    }
                    let mut dx = vec![0.0; b * n_in];
                    gemm(b, units, n_in, &delta, false, self.weights(slot), true, 0.0, &mut dx);
                    delta = dx;
                }
                LayerSpec::Flatten => {}
            }
        }
        Ok(delta)
    }

    fn weights(&self, s: Slot) -> &[f64] {
        &self.params[s.weights..s.weights + s.n_weights]
    }

    fn bias(&self, s: Slot) -> &[f64] {
        &self.params[s.bias..s.bias + s.n_bias]
    }
}

fn split_grads(grads: &mut [f64], s: Slot) -> (&mut [f64], &mut [f64]) {
    let (w, rest) = grads[s.weights..].split_at_mut(s.n_weights);
    (w, &mut rest[..s.n_bias])
}

fn positions(shape: LayerShape) -> usize {
    match shape {
        LayerShape::Image { height, width, .. } => height * width,
        LayerShape::Flat(_) => 1,
    }
}

fn patch_len(input: LayerShape, kernel: usize) -> usize {
    match input {
        LayerShape::Image { channels, .. } => kernel * kernel * channels,
        LayerShape::Flat(_) => unreachable!("convolution over a flat input"),
    }
}

fn add_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn sum_rows(delta: &[f64], width: usize, acc: &mut [f64]) {
    for row in delta.chunks_exact(width) {
        for (a, d) in acc.iter_mut().zip(row) {
            *a += d;
        }
    }
}

fn relu_mask(delta: &mut [f64], out: &[f64], act: Activation) {
    if act == Activation::Relu {
        for (d, &o) in delta.iter_mut().zip(out) {
            if o <= 0.0 {
                *d = 0.0;
            }
        }
    }
}

/// Rows are output positions (batch, y, x); each row is the receptive
/// field in `[ky, kx, c]` order.
fn im2col(input: &[f64], batch: usize, shape: LayerShape, kernel: usize) -> Vec<f64> {
    let LayerShape::Image {
        height,
        width,
        channels,
    } = shape
    else {
        unreachable!()
    };
    if kernel == 1 {
        return input.to_vec();
    }
    let (oh, ow) = (height - kernel + 1, width - kernel + 1);
    let seg = kernel * channels;
    let k = kernel * seg;
    let mut out = vec![0.0; batch * oh * ow * k];
    let mut dst = 0;
    for b in 0..batch {
        let img = &input[b * height * width * channels..(b + 1) * height * width * channels];
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..kernel {
                    let src = ((oy + ky) * width + ox) * channels;
                    out[dst..dst + seg].copy_from_slice(&img[src..src + seg]);
                    dst += seg;
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im(patches: &[f64], batch: usize, shape: LayerShape, kernel: usize) -> Vec<f64> {
    let LayerShape::Image {
        height,
        width,
        channels,
    } = shape
    else {
        unreachable!()
    };
    if kernel == 1 {
        return patches.to_vec();
    }
    let (oh, ow) = (height - kernel + 1, width - kernel + 1);
    let seg = kernel * channels;
    let mut out = vec![0.0; batch * height * width * channels];
    let mut src = 0;
    for b in 0..batch {
        let img = &mut out[b * height * width * channels..(b + 1) * height * width * channels];
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..kernel {
                    let dst = ((oy + ky) * width + ox) * channels;
                    for (d, s) in img[dst..dst + seg].iter_mut().zip(&patches[src..src + seg]) {
                        *d += s;
                    }
                    src += seg;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(h: usize, w: usize, c: usize) -> LayerShape {
        LayerShape::Image {
            height: h,
            width: w,
            channels: c,
        }
    }

    #[test]
    fn one_by_one_identity_convolution() {
        let spec = NetworkSpec {
            input: image(3, 3, 1),
            layers: vec![LayerSpec::Conv2d {
                filters: 1,
                kernel: 1,
                activation: Activation::Linear,
            }],
        };
        let net = Network::with_params(spec, vec![1.0, 0.0]).unwrap();
        let x = Tensor::new(vec![1, 3, 3, 1], (0..9).map(|v| v as f64 - 4.0).collect()).unwrap();
        assert_eq!(net.predict(&x).unwrap().data(), x.data());
    }

    #[test]
    fn window_sums() {
        let spec = NetworkSpec {
            input: image(3, 3, 1),
            layers: vec![LayerSpec::Conv2d {
                filters: 1,
                kernel: 2,
                activation: Activation::Linear,
            }],
        };
        let net = Network::with_params(spec, vec![1.0, 1.0, 1.0, 1.0, 0.0]).unwrap();
        let x = Tensor::new(vec![1, 3, 3, 1], (1..=9).map(|v| v as f64).collect()).unwrap();
        let y = net.predict(&x).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert_eq!(y.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn cross_correlation_not_convolution() {
        // asymmetric kernel picks out the top-left of each window
        let spec = NetworkSpec {
            input: image(3, 3, 1),
            layers: vec![LayerSpec::Conv2d {
                filters: 1,
                kernel: 2,
                activation: Activation::Linear,
            }],
        };
        let net = Network::with_params(spec, vec![1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let x = Tensor::new(vec![1, 3, 3, 1], (1..=9).map(|v| v as f64).collect()).unwrap();
        assert_eq!(net.predict(&x).unwrap().data(), &[1.0, 2.0, 4.0, 5.0]);
    }

    #[test]
    fn shape_errors() {
        let spec = NetworkSpec {
            input: image(4, 4, 1),
            layers: vec![LayerSpec::Conv2d {
                filters: 2,
                kernel: 5,
                activation: Activation::Relu,
            }],
        };
        assert!(spec.output_shapes().is_err());
        let spec = NetworkSpec {
            input: image(4, 4, 1),
            layers: vec![LayerSpec::Dense {
                units: 2,
                activation: Activation::Relu,
            }],
        };
        assert!(spec.output_shapes().is_err());

        let spec = NetworkSpec {
            input: image(2, 2, 1),
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 3, activation: Activation::Linear }],
        };
        let net = Network::new(spec, 1).unwrap();
        assert!(net.forward(&Tensor::zeros(vec![1, 3, 3, 1])).is_err());
    }

    #[test]
    fn dense_count() {
        let spec = NetworkSpec {
            input: LayerShape::Flat(4),
            layers: vec![LayerSpec::Dense {
                units: 2,
                activation: Activation::Linear,
            }],
        };
        assert_eq!(param_count(&spec).unwrap(), 10);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let spec = NetworkSpec {
            input: LayerShape::Flat(2),
            layers: vec![LayerSpec::Dense { units: 1, activation: Activation::Linear }],
        };
        let mut net = Network::new(spec, 3).unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let (_, cache) = net.forward(&x).unwrap();
        net.params_mut()[0] += 1.0;
        let mut g = vec![0.0; net.num_params()];
        let og = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        assert!(matches!(net.backward(&cache, &og, &mut g), Err(Error::StaleCache)));
    }

    #[test]
    fn relu_blocks_gradient() {
        let spec = NetworkSpec {
            input: LayerShape::Flat(1),
            layers: vec![LayerSpec::Dense { units: 1, activation: Activation::Relu }],
        };
        // w = 1, b = -5: pre-activation negative for x = 2
        let net = Network::with_params(spec, vec![1.0, -5.0]).unwrap();
        let x = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let (y, cache) = net.forward(&x).unwrap();
        assert_eq!(y.data(), &[0.0]);
        let mut g = vec![0.0; 2];
        let dx = net
            .backward_input(&cache, &Tensor::new(vec![1, 1], vec![1.0]).unwrap(), &mut g)
            .unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert_eq!(dx, vec![0.0]);
    }

    #[test]
    fn linear_network_is_homogeneous() {
        let spec = NetworkSpec {
            input: image(5, 5, 1),
            layers: vec![
                LayerSpec::Conv2d { filters: 3, kernel: 3, activation: Activation::Linear },
                LayerSpec::Conv2d { filters: 2, kernel: 3, activation: Activation::Linear },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 3, activation: Activation::Linear },
            ],
        };
        let net = Network::new(spec, 9).unwrap();
        let x = Tensor::new(vec![2, 5, 5, 1], (0..50).map(|v| (v as f64 * 0.3).sin()).collect()).unwrap();
        let x3 = Tensor::new(vec![2, 5, 5, 1], x.data().iter().map(|v| 3.0 * v).collect()).unwrap();
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x3).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((3.0 * p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn initialization_is_seeded() {
        let spec = NetworkSpec {
            input: LayerShape::Flat(8),
            layers: vec![LayerSpec::Dense { units: 4, activation: Activation::Relu }],
        };
        let a = Network::new(spec.clone(), 1).unwrap();
        let b = Network::new(spec.clone(), 1).unwrap();
        let c = Network::new(spec, 2).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
        assert!(a.params()[32..].iter().all(|&v| v == 0.0));
    }
}
