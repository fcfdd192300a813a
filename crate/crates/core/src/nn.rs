//! Dense feed-forward layers with hand-written backpropagation.
//!
//! Weights are stored `in × out` so a batch `X` (rows = examples) maps to
//! `X · W + b`. All arithmetic is `f64`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Dense {
            weights: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Sequence of dense layers. Hidden layers use ReLU, the last is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Per-layer `(dW, db)`, shaped like the owning [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

/// Activations recorded during a training forward pass.
pub(crate) struct Trace {
    inputs: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::InvalidArgument(format!(
                    "layer output {} does not chain into input {}",
                    pair[0].output_dim(),
                    pair[1].input_dim()
                )));
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::InvalidArgument("bias length mismatch".into()));
            }
            if !l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite parameter".into()));
            }
        }
        Ok(Mlp { layers })
    }

    /// Zero parameters for layer widths `dims` (input first, output last).
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "need input and output dims");
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { Activation::Identity } else { Activation::Relu };
                Dense::zeros(w[0], w[1], act)
            })
            .collect();
        Mlp { layers }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let mut mlp = Self::zeros(dims);
        for layer in &mut mlp.layers {
            let bound = 1.0 / (layer.input_dim() as f64).sqrt();
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        mlp
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Layer widths, input first.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::output_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for layer in &self.layers {
            h = apply(layer, h.view());
        }
        h
    }

    pub(crate) fn forward_trace(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Trace) {
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_owned();
        for layer in &self.layers {
            let out = apply(layer, h.view());
            trace.inputs.push(h);
            trace.outputs.push(out.clone());
            h = out;
        }
        (h, trace)
    }

    /// Gradients of a scalar loss given `d loss / d output`.
    pub(crate) fn backward(&self, trace: &Trace, grad_out: ArrayView2<'_, f64>) -> MlpGrads {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.to_owned();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if layer.activation == Activation::Relu {
                g.zip_mut_with(&trace.outputs[i], |gv, &o| {
                    if o <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            let dw = trace.inputs[i].t().dot(&g);
            let db = g.sum_axis(Axis(0));
            if i > 0 {
                g = g.dot(&layer.weights.t());
            }
            grads.push((dw, db));
        }
        grads.reverse();
        MlpGrads { layers: grads }
    }

    /// Momentum SGD: `v ← μ·v + g`, `θ ← θ − lr·v`.
    pub fn sgd_step(&mut self, grads: &MlpGrads, velocity: &mut MlpGrads, lr: f64, momentum: f64) {
        for ((layer, (gw, gb)), (vw, vb)) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(velocity.layers.iter_mut())
        {
            vw.zip_mut_with(gw, |v, &g| *v = momentum * *v + g);
            vb.zip_mut_with(gb, |v, &g| *v = momentum * *v + g);
            layer.weights.scaled_add(-lr, vw);
            layer.bias.scaled_add(-lr, vb);
        }
    }

    /// Flattened parameters: per layer, weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Inverse of [`Mlp::params`]; returns the number of values consumed.
    pub fn set_params(&mut self, values: &[f64]) -> usize {
        let mut pos = 0;
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = values[pos];
                pos += 1;
            }
            for b in l.bias.iter_mut() {
                *b = values[pos];
                pos += 1;
            }
        }
        pos
    }
}

fn apply(layer: &Dense, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut z = x.dot(&layer.weights);
    z += &layer.bias;
    if layer.activation == Activation::Relu {
        z.mapv_inplace(|v| v.max(0.0));
    }
    z
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            layers: mlp
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            *w *= s;
            *b *= s;
        }
    }

    /// Same ordering as [`Mlp::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Summed cross-entropy over rows and its gradient `softmax(z) − onehot(t)`
/// with respect to the logits (not yet divided by the batch size).
pub(crate) fn cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for ((row, mut g), &t) in logits.rows().into_iter().zip(grad.rows_mut()).zip(targets) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[t];
        for (gv, &z) in g.iter_mut().zip(row.iter()) {
            *gv = (z - lse).exp();
        }
        g[t] -= 1.0;
    }
    (loss, grad)
}
