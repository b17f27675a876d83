//! A small classifier with hand-written forward and backward passes.
//!
//! Activations are batch-major `Array2`s: one row per sample, each row a
//! channel-planar (`C×H×W`) flattening of the feature map.

mod layers;
mod optim;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{AugRng, Stream};
use crate::scalar::Real;

pub use layers::Layer;
pub use optim::{OptimizerConfig, Schedule, Sgd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// 3×3 convolution, stride 1, zero padding 1.
    Conv3x3 { in_ch: usize, out_ch: usize },
    /// 2×2 max pooling, stride 2 (odd trailing rows/columns are dropped).
    MaxPool2,
    ReLU,
    Flatten,
    FullyConnected { in_dim: usize, out_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    fn len(self) -> usize {
        match self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

/// Named desk-scale architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Conv(c,16)-ReLU-Pool-Conv(16,32)-ReLU-Pool-Flatten-FC(64)-ReLU-FC(k).
    TinyCnn,
    /// Flatten-FC(256)-ReLU-FC(k).
    Mlp,
}

pub const TINY_CNN_HIDDEN: usize = 64;
pub const MLP_HIDDEN: usize = 256;

impl Architecture {
    pub fn layers(self, input: InputShape, k: usize) -> Vec<LayerSpec> {
        match self {
            Architecture::TinyCnn => {
                let flat = 32 * (input.height / 4) * (input.width / 4);
                vec![
                    LayerSpec::Conv3x3 { in_ch: input.channels, out_ch: 16 },
                    LayerSpec::ReLU,
                    LayerSpec::MaxPool2,
                    LayerSpec::Conv3x3 { in_ch: 16, out_ch: 32 },
                    LayerSpec::ReLU,
                    LayerSpec::MaxPool2,
                    LayerSpec::Flatten,
                    LayerSpec::FullyConnected { in_dim: flat, out_dim: TINY_CNN_HIDDEN },
                    LayerSpec::ReLU,
                    LayerSpec::FullyConnected { in_dim: TINY_CNN_HIDDEN, out_dim: k },
                ]
            }
            Architecture::Mlp => vec![
                LayerSpec::Flatten,
                LayerSpec::FullyConnected { in_dim: input.len(), out_dim: MLP_HIDDEN },
                LayerSpec::ReLU,
                LayerSpec::FullyConnected { in_dim: MLP_HIDDEN, out_dim: k },
            ],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::TinyCnn => "tiny-cnn",
            Architecture::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny-cnn" => Ok(Architecture::TinyCnn),
            "mlp" => Ok(Architecture::Mlp),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything backward needs, plus the outputs callers inspect.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T: Real> {
    /// Input to each layer; empty in eval mode.
    inputs: Vec<Array2<T>>,
    /// Per-layer scratch (im2col buffers, pooling argmax); empty in eval mode.
    caches: Vec<layers::Cache<T>>,
    pub logits: Array2<T>,
    /// Input to the final fully connected layer.
    pub penultimate: Array2<T>,
    layer_count: usize,
}

impl<T: Real> ForwardTrace<T> {
    pub fn batch_size(&self) -> usize {
        self.logits.nrows()
    }

    pub fn is_retained(&self) -> bool {
        !self.inputs.is_empty()
    }
}

/// Parameter gradients, one entry per layer (`None` for parameter-free layers).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Real> {
    pub layers: Vec<Option<(Array2<T>, Array1<T>)>>,
}

impl<T: Real> Gradients<T> {
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.layers.iter().flatten() {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a, b) {
                *aw += bw;
                *ab += bb;
            }
        }
    }
}

pub struct Network<T: Real> {
    input: InputShape,
    k: usize,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer<T>>,
    forward_calls: AtomicU64,
}

impl<T: Real> Clone for Network<T> {
    fn clone(&self) -> Self {
        Self {
            input: self.input,
            k: self.k,
            specs: self.specs.clone(),
            layers: self.layers.clone(),
            forward_calls: AtomicU64::new(self.forward_calls.load(Ordering::Relaxed)),
        }
    }
}

impl<T: Real> fmt::Debug for Network<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("input", &self.input)
            .field("k", &self.k)
            .field("specs", &self.specs)
            .finish()
    }
}

impl<T: Real> PartialEq for Network<T> {
    fn eq(&self, other: &Self) -> bool {
        self.input == other.input && self.specs == other.specs && self.layers == other.layers
    }
}

impl<T: Real> Network<T> {
    /// He-initialised network (`N(0, 2/fan_in)` weights, zero biases).
    pub fn new(input: InputShape, specs: &[LayerSpec], k: usize, seed: u64) -> Result<Self> {
        let mut rng = AugRng::for_stream(Stream::Init, seed, 0, 0);
        Self::build(input, specs, k, |fan_in| {
            let std = (2.0 / fan_in as f64).sqrt();
            T::of(rng.normal() * std)
        })
    }

    /// Every parameter set to zero.
    pub fn zeros(input: InputShape, specs: &[LayerSpec], k: usize) -> Result<Self> {
        Self::build(input, specs, k, |_| T::zero())
    }

    pub fn from_architecture(arch: Architecture, input: InputShape, k: usize, seed: u64) -> Result<Self> {
        Self::new(input, &arch.layers(input, k), k, seed)
    }

    fn build(
        input: InputShape,
        specs: &[LayerSpec],
        k: usize,
        mut init: impl FnMut(usize) -> T,
    ) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {k}")));
        }
        let mut shape = Shape::Spatial {
            c: input.channels,
            h: input.height,
            w: input.width,
        };
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let mismatch = |what: &str| Error::Config(format!("layer {i} ({spec:?}): {what}"));
            let layer = match (*spec, shape) {
                (LayerSpec::Conv3x3 { in_ch, out_ch }, Shape::Spatial { c, h, w }) => {
                    if in_ch != c {
                        return Err(mismatch(&format!("expects {in_ch} channels, input has {c}")));
                    }
                    shape = Shape::Spatial { c: out_ch, h, w };
                    let fan_in = in_ch * 9;
                    Layer::conv(in_ch, out_ch, h, w, |_| init(fan_in))
                }
                (LayerSpec::MaxPool2, Shape::Spatial { c, h, w }) => {
                    if h < 2 || w < 2 {
                        return Err(mismatch("feature map smaller than 2×2"));
                    }
                    shape = Shape::Spatial { c, h: h / 2, w: w / 2 };
                    Layer::Pool { c, h, w }
                }
                (LayerSpec::ReLU, _) => Layer::Relu,
                (LayerSpec::Flatten, s) => {
                    shape = Shape::Flat(s.len());
                    Layer::Flatten
                }
                (LayerSpec::FullyConnected { in_dim, out_dim }, Shape::Flat(n)) => {
                    if in_dim != n {
                        return Err(mismatch(&format!("expects {in_dim} inputs, got {n}")));
                    }
                    shape = Shape::Flat(out_dim);
                    Layer::fc(in_dim, out_dim, |_| init(in_dim))
                }
                (_, s) => return Err(mismatch(&format!("cannot follow a {s:?} activation"))),
            };
            layers.push(layer);
        }
        if shape != Shape::Flat(k) {
            return Err(Error::Config(format!(
                "network ends in {shape:?}, expected {k} logits"
            )));
        }
        if !matches!(layers.last(), Some(Layer::Fc { .. })) {
            return Err(Error::Config("last layer must be fully connected".into()));
        }
        Ok(Self {
            input,
            k,
            specs: specs.to_vec(),
            layers,
            forward_calls: AtomicU64::new(0),
        })
    }

    pub fn input_shape(&self) -> InputShape {
        self.input
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Number of `forward` calls made on this network.
    pub fn forward_calls(&self) -> u64 {
        self.forward_calls.load(Ordering::Relaxed)
    }

    pub fn forward(&self, batch: &Array2<T>, mode: Mode) -> Result<ForwardTrace<T>> {
        if batch.ncols() != self.input.len() {
            return Err(Error::Config(format!(
                "input rows have {} values, network expects {}",
                batch.ncols(),
                self.input.len()
            )));
        }
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        let retain = mode == Mode::Train;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::new();
        let mut caches = Vec::new();
        let mut x = batch.to_owned();
        let mut penultimate = None;
        for (i, layer) in self.layers.iter().enumerate() {
            if i == last {
                penultimate = Some(x.clone());
            }
            let (y, cache) = layer.forward(&x, retain);
            if retain {
                inputs.push(x);
                caches.push(cache);
            }
            x = y;
        }
        Ok(ForwardTrace {
            inputs,
            caches,
            logits: x,
            penultimate: penultimate.expect("network has at least one layer"),
            layer_count: self.layers.len(),
        })
    }

    /// Backpropagates `loss_grads` (∂loss/∂logits, one row per sample).
    pub fn backward(&self, trace: &ForwardTrace<T>, loss_grads: &Array2<T>) -> Result<Gradients<T>> {
        if !trace.is_retained() {
            return Err(Error::InvalidInput("trace was produced in eval mode".into()));
        }
        if trace.layer_count != self.layers.len() || trace.logits.ncols() != self.k {
            return Err(Error::InvalidInput("trace does not belong to this network".into()));
        }
        if loss_grads.dim() != trace.logits.dim() {
            return Err(Error::InvalidInput(format!(
                "loss gradient shape {:?} does not match logits {:?}",
                loss_grads.dim(),
                trace.logits.dim()
            )));
        }
        let mut grads = vec![None; self.layers.len()];
        let mut upstream = loss_grads.to_owned();
        for i in (0..self.layers.len()).rev() {
            let need_input_grad = i > 0;
            let (dx, pg) = self.layers[i].backward(&trace.inputs[i], &trace.caches[i], &upstream, need_input_grad);
            grads[i] = pg;
            match dx {
                Some(dx) => upstream = dx,
                None => break,
            }
        }
        Ok(Gradients { layers: grads })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::num_params).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            if let Some((w, b)) = layer.params() {
                out.extend(w.iter().copied());
                out.extend(b.iter().copied());
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut it = values.iter().copied();
        for layer in &mut self.layers {
            if let Some((w, b)) = layer.params_mut() {
                w.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
                b.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            }
        }
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn squared_norm(&self) -> f64 {
        self.params_flat().iter().map(|v| v.as_f64().powi(2)).sum()
    }
}
