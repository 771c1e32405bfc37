use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{self, ConvGeometry};
use super::{NetError, Tensor};
use crate::patcher::Patch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    MaxPool,
    Relu,
    FullyConnected,
    Softmax,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Conv => "conv",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Relu => "relu",
            LayerKind::FullyConnected => "fc",
            LayerKind::Softmax => "softmax",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// `(kh, kw)`, conv only.
    pub kernel: (usize, usize),
    /// Output channels (conv) or units (fc).
    pub out: usize,
    pub stride: usize,
}

impl LayerSpec {
    pub fn conv(out: usize, kh: usize, kw: usize) -> Self {
        Self { kind: LayerKind::Conv, kernel: (kh, kw), out, stride: 1 }
    }
    pub fn maxpool() -> Self {
        Self { kind: LayerKind::MaxPool, kernel: (2, 2), out: 0, stride: 2 }
    }
    pub fn relu() -> Self {
        Self { kind: LayerKind::Relu, kernel: (0, 0), out: 0, stride: 1 }
    }
    pub fn fc(out: usize) -> Self {
        Self { kind: LayerKind::FullyConnected, kernel: (0, 0), out, stride: 1 }
    }
    pub fn softmax() -> Self {
        Self { kind: LayerKind::Softmax, kernel: (0, 0), out: 0, stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    /// Conv: `[out][kh][kw][in]`; fc: `[out][in]`; empty otherwise.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn geometry(&self) -> ConvGeometry {
        let [h, w, c] = self.in_shape[..] else { unreachable!("conv input is rank 3") };
        ConvGeometry { h, w, c, kh: self.spec.kernel.0, kw: self.spec.kernel.1, out_c: self.spec.out, stride: self.spec.stride }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Derives the output shape of `spec` applied to `input`.
fn output_shape(spec: &LayerSpec, input: &[usize]) -> Result<Vec<usize>, NetError> {
    match spec.kind {
        LayerKind::Conv => {
            let [h, w, c] = input[..] else {
                return Err(NetError::ShapeMismatch(format!("conv after flat input {input:?}")));
            };
            let g = ConvGeometry::new((h, w, c), spec.kernel, spec.out, spec.stride)?;
            Ok(vec![g.out_h(), g.out_w(), spec.out])
        }
        LayerKind::MaxPool => {
            let [h, w, c] = input[..] else {
                return Err(NetError::ShapeMismatch(format!("pool after flat input {input:?}")));
            };
            if h < 2 || w < 2 {
                return Err(NetError::ShapeUnderflow(format!("cannot pool a {h}x{w} map")));
            }
            if h % 2 != 0 || w % 2 != 0 {
                return Err(NetError::OddSpatialDim(h, w));
            }
            Ok(vec![h / 2, w / 2, c])
        }
        LayerKind::Relu => Ok(input.to_vec()),
        LayerKind::FullyConnected => {
            if spec.out == 0 {
                return Err(NetError::ShapeMismatch("fc layer with zero units".into()));
            }
            Ok(vec![spec.out])
        }
        LayerKind::Softmax => Ok(vec![input.iter().product()]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
    rng_seed: u64,
}

/// Per-layer parameter gradients, same layout as [`Layer::weights`]/[`Layer::bias`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &Model) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        let pairs = self.weights.iter_mut().zip(&other.weights).chain(self.bias.iter_mut().zip(&other.bias));
        for (a, b) in pairs {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Everything `backward` needs from the forward pass.
struct Trace {
    /// `inputs[k]` is the input of layer `k`; the last entry is the model output.
    inputs: Vec<Tensor>,
    cols: Vec<Option<Vec<f64>>>,
    argmax: Vec<Option<Vec<usize>>>,
}

/// Result of a full backward pass.
pub struct Backward {
    pub loss: f64,
    /// Model output for the sample.
    pub output: Vec<f64>,
    pub grads: Gradients,
    /// Gradient of the loss w.r.t. every layer's input, when requested.
    pub input_grads: Option<Vec<Vec<f64>>>,
}

impl Model {
    /// Composes `specs` on an `(h, w, c)` input and draws weights uniformly in
    /// `±sqrt(6 / (fan_in + fan_out))`; biases start at zero.
    pub fn from_specs(input_shape: [usize; 3], specs: &[LayerSpec], seed: u64) -> Result<Self, NetError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let out_shape = output_shape(spec, &shape)?;
            let (fan_in, fan_out, n_weights, n_bias) = match spec.kind {
                LayerKind::Conv => {
                    let (kh, kw) = spec.kernel;
                    let area = kh * kw;
                    (area * shape[2], area * spec.out, area * shape[2] * spec.out, spec.out)
                }
                LayerKind::FullyConnected => {
                    let n_in: usize = shape.iter().product();
                    (n_in, spec.out, n_in * spec.out, spec.out)
                }
                _ => (0, 0, 0, 0),
            };
            let weights = if n_weights > 0 {
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n_weights).map(|_| rng.gen_range(-r..r)).collect()
            } else {
                Vec::new()
            };
            layers.push(Layer { spec: *spec, in_shape: shape, out_shape: out_shape.clone(), weights, bias: vec![0.0; n_bias] });
            shape = out_shape;
        }
        Ok(Self { input_shape, layers, rng_seed: seed })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(self.input_shape.iter().product(), |l| l.out_shape.iter().product())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<(), NetError> {
        if x.shape() != self.input_shape {
            return Err(NetError::ShapeMismatch(format!(
                "model expects {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    fn run_layer(layer: &Layer, x: &Tensor, keep: bool) -> (Tensor, Option<Vec<f64>>, Option<Vec<usize>>) {
        match layer.spec.kind {
            LayerKind::Conv => {
                let g = layer.geometry();
                let cols = ops::im2col(x.values(), &g);
                let y = ops::conv_forward_cols(&cols, &g, &layer.weights, &layer.bias);
                (Tensor::from_parts(layer.out_shape.clone(), y), keep.then_some(cols), None)
            }
            LayerKind::MaxPool => {
                let (y, arg) = ops::maxpool_forward(x).expect("pool shapes validated at build");
                (y, None, keep.then_some(arg))
            }
            LayerKind::Relu => (ops::relu(x), None, None),
            LayerKind::FullyConnected => {
                let y = ops::fc_forward(x, &layer.weights, &layer.bias).expect("fc shapes validated at build");
                (y, None, None)
            }
            LayerKind::Softmax => (ops::softmax(x), None, None),
        }
    }

    /// Runs layers `start..` on `x`, which must have layer `start`'s input shape.
    pub fn forward_from(&self, start: usize, x: &Tensor) -> Result<Tensor, NetError> {
        let expect = match self.layers.get(start) {
            Some(l) => &l.in_shape,
            None => return Ok(x.clone()),
        };
        if x.shape() != expect.as_slice() {
            return Err(NetError::ShapeMismatch(format!("layer {start} expects {expect:?}, got {:?}", x.shape())));
        }
        let mut cur = x.clone();
        for layer in &self.layers[start..] {
            cur = Self::run_layer(layer, &cur, false).0;
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NetError> {
        self.check_input(x)?;
        self.forward_from(0, x)
    }

    fn trace(&self, x: &Tensor) -> Trace {
        let n = self.layers.len();
        let mut trace = Trace { inputs: Vec::with_capacity(n + 1), cols: Vec::with_capacity(n), argmax: Vec::with_capacity(n) };
        trace.inputs.push(x.clone());
        for layer in &self.layers {
            let (y, cols, arg) = Self::run_layer(layer, trace.inputs.last().unwrap(), true);
            trace.inputs.push(y);
            trace.cols.push(cols);
            trace.argmax.push(arg);
        }
        trace
    }

    /// Cross-entropy loss of the model output at `target`. When the model does
    /// not end in softmax its raw output is treated as probabilities.
    pub fn loss(&self, x: &Tensor, target: usize) -> Result<f64, NetError> {
        self.loss_from(0, x, target)
    }

    pub fn loss_from(&self, start: usize, x: &Tensor, target: usize) -> Result<f64, NetError> {
        let p = self.forward_from(start, x)?;
        self.check_target(target)?;
        Ok(ops::cross_entropy(p.values(), target))
    }

    fn check_target(&self, target: usize) -> Result<(), NetError> {
        let classes = self.output_len();
        if target >= classes {
            return Err(NetError::ShapeMismatch(format!("target {target} outside {classes} classes")));
        }
        Ok(())
    }

    /// Exact gradients of the cross-entropy loss.
    pub fn backward(&self, x: &Tensor, target: usize) -> Result<Backward, NetError> {
        self.backward_impl(x, target, false)
    }

    /// Like [`Model::backward`] but also returns every layer's input gradient.
    pub fn backward_full(&self, x: &Tensor, target: usize) -> Result<Backward, NetError> {
        self.backward_impl(x, target, true)
    }

    fn backward_impl(&self, x: &Tensor, target: usize, all_inputs: bool) -> Result<Backward, NetError> {
        self.check_input(x)?;
        self.check_target(target)?;
        let trace = self.trace(x);
        let p = trace.inputs.last().unwrap().values();
        let loss = ops::cross_entropy(p, target);
        let mut grads = Gradients::zeros_like(self);
        let n = self.layers.len();
        let mut input_grads = all_inputs.then(|| vec![Vec::new(); n]);

        let mut k = n;
        let mut delta: Vec<f64>;
        if matches!(self.layers.last().map(|l| l.spec.kind), Some(LayerKind::Softmax)) {
            // fused softmax + cross-entropy
            delta = p.to_vec();
            delta[target] -= 1.0;
            k -= 1;
            if let Some(ig) = input_grads.as_mut() {
                ig[k] = delta.clone();
            }
        } else {
            delta = vec![0.0; p.len()];
            delta[target] = -1.0 / p[target].max(f64::MIN_POSITIVE);
        }
        while k > 0 {
            k -= 1;
            let layer = &self.layers[k];
            let input = trace.inputs[k].values();
            let want_dx = k > 0 || all_inputs;
            let dx = match layer.spec.kind {
                LayerKind::Conv => ops::conv_backward(
                    trace.cols[k].as_ref().unwrap(),
                    &layer.geometry(),
                    &layer.weights,
                    &delta,
                    &mut grads.weights[k],
                    &mut grads.bias[k],
                    want_dx,
                ),
                LayerKind::FullyConnected => {
                    ops::fc_backward(input, &layer.weights, &delta, &mut grads.weights[k], &mut grads.bias[k], want_dx)
                }
                LayerKind::MaxPool => {
                    Some(ops::maxpool_backward(&delta, trace.argmax[k].as_ref().unwrap(), input.len()))
                }
                LayerKind::Relu => Some(ops::relu_backward(input, &delta)),
                LayerKind::Softmax => Some(ops::softmax_backward(trace.inputs[k + 1].values(), &delta)),
            };
            match dx {
                Some(d) => {
                    if let Some(ig) = input_grads.as_mut() {
                        ig[k] = d.clone();
                    }
                    delta = d;
                }
                None => break,
            }
        }
        Ok(Backward { loss, output: trace.inputs[n].values().to_vec(), grads, input_grads })
    }

    /// Class probabilities for one patch.
    pub fn predict(&self, patch: &Patch) -> Result<Vec<f64>, NetError> {
        let x = patch_tensor(patch)?;
        Ok(self.forward(&x)?.into_values())
    }
}

pub fn patch_tensor(patch: &Patch) -> Result<Tensor, NetError> {
    Tensor::new(vec![patch.n, patch.n, patch.slices], patch.data.clone())
}

/// Build-time shape of the segmentation network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    /// `(h, w, slices)`.
    pub input: [usize; 3],
    pub classes: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { input: [64, 64, 9], classes: 2, seed: 1 }
    }
}

/// Conv(24@5×5) → ReLU → pool → Conv(32@3×3) → ReLU → pool → Conv(48@3×3) →
/// ReLU → pool → FC(16) → ReLU → FC(classes) → softmax.
pub fn network_specs(classes: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv(24, 5, 5),
        LayerSpec::relu(),
        LayerSpec::maxpool(),
        LayerSpec::conv(32, 3, 3),
        LayerSpec::relu(),
        LayerSpec::maxpool(),
        LayerSpec::conv(48, 3, 3),
        LayerSpec::relu(),
        LayerSpec::maxpool(),
        LayerSpec::fc(16),
        LayerSpec::relu(),
        LayerSpec::fc(classes),
        LayerSpec::softmax(),
    ]
}

pub fn build_network(cfg: &NetworkConfig) -> Result<Model, NetError> {
    if cfg.classes < 2 {
        return Err(NetError::ShapeMismatch(format!("need at least 2 classes, got {}", cfg.classes)));
    }
    Model::from_specs(cfg.input, &network_specs(cfg.classes), cfg.seed).map_err(|e| match e {
        NetError::OddSpatialDim(h, w) => {
            NetError::ShapeUnderflow(format!("pooling reached an odd {h}x{w} map for input {:?}", cfg.input))
        }
        other => other,
    })
}
