//! Small dense networks with hand-written backpropagation.
//!
//! Parameters live in one flat vector laid out layer by layer as
//! `[W_0 (out×in, row-major), b_0, W_1, b_1, ...]`, so optimizers and
//! finite-difference checks can treat a network as a plain `&[f64]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Feed-forward network: hidden layers use `activation`, the output layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

/// Per-layer outputs saved by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry the network output.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty cache")
    }
}

impl Mlp {
    /// Xavier-uniform weights, zero biases. The final layer is scaled by
    /// `output_gain` (small values give a near-uniform initial policy).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, activation);
        let layers = net.num_layers();
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            for w in &mut net.params[offset..offset + fan_in * fan_out] {
                *w = gain * rng.random_range(-limit..=limit);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        assert!(sizes.iter().all(|&s| s > 0), "layer sizes must be positive");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self { sizes: sizes.to_vec(), activation, params: vec![0.0; n] }
    }

    /// Rebuild from a flat parameter vector, checking the length.
    pub fn from_parts(sizes: Vec<usize>, activation: Activation, params: Vec<f64>) -> Option<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return None;
        }
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        (params.len() == expected).then_some(Self { sizes, activation, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        let mut offset = 0;
        for l in 0..self.num_layers() {
            x = self.layer(l, &x, &mut offset);
        }
        x
    }

    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..self.num_layers() {
            let next = self.layer(l, activations.last().unwrap(), &mut offset);
            activations.push(next);
        }
        ForwardCache { activations }
    }

    fn layer(&self, l: usize, x: &[f64], offset: &mut usize) -> Vec<f64> {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        debug_assert_eq!(x.len(), n_in);
        let w = &self.params[*offset..*offset + n_in * n_out];
        let b = &self.params[*offset + n_in * n_out..*offset + n_in * n_out + n_out];
        *offset += n_in * n_out + n_out;
        let hidden = l + 1 < self.num_layers();
        (0..n_out)
            .map(|o| {
                let row = &w[o * n_in..(o + 1) * n_in];
                let z = b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
                if hidden {
                    self.activation.apply(z)
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulate `d loss / d params` into `grads` given `d loss / d output`.
    /// Returns `d loss / d input`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut [f64]) -> Vec<f64> {
        assert_eq!(grads.len(), self.params.len());
        let layers = self.num_layers();
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }

        let mut delta = grad_output.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 < layers {
                let out = &cache.activations[l + 1];
                for (d, &y) in delta.iter_mut().zip(out) {
                    *d *= self.activation.derivative_from_output(y);
                }
            }
            let x = &cache.activations[l];
            let o = offsets[l];
            let w = &self.params[o..o + n_in * n_out];
            let (gw, gb) = grads[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut prev = vec![0.0; n_in];
            for (j, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[j] += d;
                let row = &w[j * n_in..(j + 1) * n_in];
                let grow = &mut gw[j * n_in..(j + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * x[i];
                    prev[i] += d * row[i];
                }
            }
            delta = prev;
        }
        delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn sgd() -> Self {
        OptimizerKind::Sgd { momentum: 0.0 }
    }
}

/// First-order optimizer over a flat parameter vector. Minimizes.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, num_params: usize) -> Self {
        Self { kind, learning_rate, first: vec![0.0; num_params], second: vec![0.0; num_params], steps: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.first.len());
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.first) {
                    *v = momentum * *v + g;
                    *p -= lr * *v;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Scale `grads` in place so its L2 norm is at most `max_norm`. Returns the original norm.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Softmax restricted to `legal`; illegal entries get probability exactly 0.
pub fn masked_softmax(logits: &[f64], legal: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(legal)
        .filter(|(_, &ok)| ok)
        .map(|(&z, _)| z)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(legal)
        .map(|(&z, &ok)| if ok { (z - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}
