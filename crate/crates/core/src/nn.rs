//! Small fully connected network with manual backpropagation.
//!
//! Hidden layers use the configured [`Activation`]; the output layer is
//! linear. Weights are stored row-major (`n_out x n_in`).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("non-finite gradient encountered ({context})")]
    NonFiniteGradient { context: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("input has {got} features, network expects {expected}")]
    InputShape { got: usize, expected: usize },
    #[error("output index {index} out of range ({n_out} outputs)")]
    OutputIndex { index: usize, n_out: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    ReLU,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Tanh, Activation::ReLU, Activation::Sigmoid];

    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::ReLU => x.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::ReLU => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "Tanh",
            Activation::ReLU => "ReLU",
            Activation::Sigmoid => "Sigmoid",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Activation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown activation {s:?}"))
    }
}

/// Per-element regression loss on `residual = prediction - target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    /// Huber with delta 1.
    Huber,
    /// `0.5 * residual^2`.
    Mse,
    /// `-0.5 * residual^2`: the sign-flipped TD loss.
    NegatedTd,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Huber, LossKind::Mse, LossKind::NegatedTd];

    /// Returns `(loss, d loss / d prediction)`.
    #[inline]
    pub fn eval<T: Scalar>(self, prediction: T, target: T) -> (T, T) {
        let r = prediction - target;
        let half = T::lit(0.5);
        match self {
            LossKind::Huber => {
                if r.abs() <= T::one() {
                    (half * r * r, r)
                } else {
                    (r.abs() - half, r.signum())
                }
            }
            LossKind::Mse => (half * r * r, r),
            LossKind::NegatedTd => (-half * r * r, -r),
        }
    }

    /// Sign applied to surrogate objectives (policy-gradient loss) under this loss.
    pub fn surrogate_sign<T: Scalar>(self) -> T {
        match self {
            LossKind::NegatedTd => -T::one(),
            _ => T::one(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam,
    #[serde(rename = "SGD")]
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "Adam",
            OptimizerKind::Sgd => "SGD",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Adam" => Ok(OptimizerKind::Adam),
            "SGD" => Ok(OptimizerKind::Sgd),
            _ => Err(format!("unknown optimizer {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer { n_in, n_out, weights: vec![T::zero(); n_in * n_out], bias: vec![T::zero(); n_out] }
    }

    #[inline]
    fn affine(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                acc = acc + *w * *xi;
            }
            out.push(acc);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
    pub activation: Activation,
}

/// Layer outputs recorded by [`Mlp::forward_cached`]; `values[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    pub values: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients with the same shapes as an [`Mlp`]'s layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Mlp<T>) -> Self {
        Gradients { layers: net.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect() }
    }

    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = T::zero());
            l.bias.iter_mut().for_each(|b| *b = T::zero());
        }
    }

    pub fn scale(&mut self, factor: T) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g = *g * factor);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    pub fn global_norm(&self) -> T {
        self.iter().map(|g| *g * *g).sum::<T>().sqrt()
    }

    /// Rescales so the global L2 norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: T) {
        let norm = self.global_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
    }
}

impl<T: Scalar> Mlp<T> {
    /// Network with layer widths `sizes` (input first, output last), initialized
    /// uniformly in `±1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs at least an input and an output layer");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let bound = 1.0 / (n_in as f64).sqrt();
                let mut draw = || T::lit(rng.random_range(-bound..bound));
                let weights = (0..n_in * n_out).map(|_| draw()).collect();
                let bias = (0..n_out).map(|_| draw()).collect();
                Layer { n_in, n_out, weights, bias }
            })
            .collect();
        Mlp { layers, activation }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    /// Layer widths, input first.
    pub fn shape(&self) -> Vec<usize> {
        std::iter::once(self.n_inputs()).chain(self.layers.iter().map(|l| l.n_out)).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn forward(&self, input: &[T]) -> Vec<T> {
        let mut x = input.to_vec();
        let mut buf = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut buf);
            if i != last {
                buf.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            std::mem::swap(&mut x, &mut buf);
        }
        x
    }

    pub fn forward_cached(&self, input: &[T], cache: &mut ForwardCache<T>) {
        let n = self.layers.len() + 1;
        cache.values.resize_with(n, Vec::new);
        cache.values[0].clear();
        cache.values[0].extend_from_slice(input);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (head, tail) = cache.values.split_at_mut(i + 1);
            let out = &mut tail[0];
            layer.affine(&head[i], out);
            if i != last {
                out.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
        }
    }

    /// Accumulates into `grads` the parameter gradient for output gradient `grad_out`.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: &[T], grads: &mut Gradients<T>) {
        let mut delta = grad_out.to_vec();
        let mut next = Vec::new();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &cache.values[i];
            let g = &mut grads.layers[i];
            for o in 0..layer.n_out {
                let d = delta[o];
                g.bias[o] = g.bias[o] + d;
                let row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (gw, xi) in row.iter_mut().zip(input) {
                    *gw = *gw + d * *xi;
                }
            }
            if i == 0 {
                break;
            }
            next.clear();
            next.resize(layer.n_in, T::zero());
            for o in 0..layer.n_out {
                let d = delta[o];
                let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (acc, w) in next.iter_mut().zip(row) {
                    *acc = *acc + d * *w;
                }
            }
            // input of layer i is the activated output of layer i-1
            for (acc, y) in next.iter_mut().zip(input) {
                *acc = *acc * self.activation.derivative_from_output(*y);
            }
            std::mem::swap(&mut delta, &mut next);
        }
    }
}

/// Gradient-descent state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    steps: i32,
    first_moment: Vec<T>,
    second_moment: Vec<T>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind, learning_rate: T, net: &Mlp<T>) -> Self {
        let n = if kind == OptimizerKind::Adam { net.n_params() } else { 0 };
        Optimizer {
            kind,
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
            steps: 0,
            first_moment: vec![T::zero(); n],
            second_moment: vec![T::zero(); n],
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    /// Applies one descent step: SGD `w -= lr * g`; Adam with bias-corrected moments.
    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>) {
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, g) in net.params_mut().zip(grads.iter()) {
                    *w = *w - lr * *g;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
                let c1 = T::one() - b1.powi(self.steps);
                let c2 = T::one() - b2.powi(self.steps);
                let moments = self.first_moment.iter_mut().zip(self.second_moment.iter_mut());
                for ((w, g), (m, v)) in net.params_mut().zip(grads.iter()).zip(moments) {
                    *m = b1 * *m + (T::one() - b1) * *g;
                    *v = b2 * *v + (T::one() - b2) * *g * *g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// One regression target on a single network output.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample<T> {
    pub input: Vec<T>,
    pub output: usize,
    pub target: T,
}

/// Mean loss and parameter gradient of `loss` over `batch`.
pub fn batch_gradient<T: Scalar>(
    net: &Mlp<T>,
    batch: &[RegressionSample<T>],
    loss: LossKind,
    grads: &mut Gradients<T>,
) -> Result<T, NnError> {
    if batch.is_empty() {
        return Err(NnError::EmptyBatch);
    }
    grads.reset();
    let mut cache = ForwardCache::default();
    let mut grad_out = vec![T::zero(); net.n_outputs()];
    let mut total = T::zero();
    for sample in batch {
        if sample.input.len() != net.n_inputs() {
            return Err(NnError::InputShape { got: sample.input.len(), expected: net.n_inputs() });
        }
        if sample.output >= net.n_outputs() {
            return Err(NnError::OutputIndex { index: sample.output, n_out: net.n_outputs() });
        }
        net.forward_cached(&sample.input, &mut cache);
        let (l, dl) = loss.eval(cache.output()[sample.output], sample.target);
        total = total + l;
        grad_out.iter_mut().for_each(|g| *g = T::zero());
        grad_out[sample.output] = dl;
        net.backward(&cache, &grad_out, grads);
    }
    let inv = T::one() / T::from_usize_lossy(batch.len());
    grads.scale(inv);
    Ok(total * inv)
}

/// One gradient step of `loss` over `batch`. Returns the pre-update mean loss.
pub fn network_update<T: Scalar>(
    net: &mut Mlp<T>,
    optimizer: &mut Optimizer<T>,
    batch: &[RegressionSample<T>],
    loss: LossKind,
    max_grad_norm: Option<T>,
) -> Result<T, NnError> {
    let mut grads = Gradients::zeros_like(net);
    let value = batch_gradient(net, batch, loss, &mut grads)?;
    if !grads.is_finite() {
        return Err(NnError::NonFiniteGradient { context: format!("{loss:?} regression update") });
    }
    if let Some(max) = max_grad_norm {
        grads.clip_global_norm(max);
    }
    optimizer.step(net, &grads);
    Ok(value)
}
