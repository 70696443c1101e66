//! Minimal feed-forward network engine.
//!
//! Networks are dense stacks `input → hidden (ReLU)* → 1 unit (sigmoid)`.
//! Weights are stored row-major with shape `(out_dim, in_dim)`; everything
//! is `f64`.

mod persist;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use persist::{ModelFile, TrainingMetadata, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use train::{
    accuracy, mean_bce_loss, train, train_on, AdamState, Target, TrainConfig, TrainReport,
};

/// Probability threshold for hard class labels.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    #[serde(alias = "ReLU")]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    #[serde(alias = "Sigmoid")]
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_hidden_activation")]
    pub hidden_activation: HiddenActivation,
    #[serde(default = "default_output_activation")]
    pub output_activation: OutputActivation,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden_activation() -> HiddenActivation {
    HiddenActivation::Relu
}

fn default_output_activation() -> OutputActivation {
    OutputActivation::Sigmoid
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, seed: u64) -> Self {
        NetworkSpec {
            input_dim,
            hidden_widths,
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Sigmoid,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if let Some(i) = self.hidden_widths.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("hidden layer {i} has width 0")));
        }
        Ok(())
    }

    /// `(out_dim, in_dim)` of every layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_widths.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_widths {
            shapes.push((w, fan_in));
            fan_in = w;
        }
        shapes.push((1, fan_in));
        shapes
    }
}

/// One dense layer: `z = W a + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` entries.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    #[inline]
    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    fn affine_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.cols).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x)
        }));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub layers: Vec<Layer>,
}

/// Pre-activations of every layer from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `pre[l]` is `W_l a_{l-1} + b_l`; the last entry has length 1.
    pub pre: Vec<Vec<f64>>,
    /// Post-activation inputs to each layer; `inputs[0]` is `x`.
    pub inputs: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn logit(&self) -> f64 {
        self.pre.last().expect("at least one layer")[0]
    }

    pub fn probability(&self) -> f64 {
        sigmoid(self.logit())
    }

    /// Smallest `|z|` over all hidden-layer pre-activations, i.e. the
    /// distance of this point from the nearest ReLU kink.
    pub fn min_hidden_margin(&self) -> f64 {
        let hidden = &self.pre[..self.pre.len() - 1];
        hidden
            .iter()
            .flatten()
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    /// Which hidden units are active (`z > 0`).
    pub fn activation_pattern(&self) -> Vec<bool> {
        let hidden = &self.pre[..self.pre.len() - 1];
        hidden.iter().flatten().map(|&z| z > 0.0).collect()
    }
}

/// Glorot-uniform weights from a ChaCha8 stream seeded with `spec.seed`,
/// zero biases.
pub fn init_network(spec: &NetworkSpec) -> Result<NetworkParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layers = spec
        .layer_shapes()
        .into_iter()
        .map(|(rows, cols)| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let weights = (0..rows * cols)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            Layer {
                rows,
                cols,
                weights,
                bias: vec![0.0; rows],
            }
        })
        .collect();
    Ok(NetworkParams {
        spec: spec.clone(),
        layers,
    })
}

impl NetworkParams {
    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    /// Checks shapes compose and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let shapes = self.spec.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::Config(format!(
                "spec declares {} layers, parameters hold {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, &(rows, cols))) in self.layers.iter().zip(&shapes).enumerate() {
            if layer.rows != rows
                || layer.cols != cols
                || layer.weights.len() != rows * cols
                || layer.bias.len() != rows
            {
                return Err(Error::Config(format!(
                    "layer {i}: expected {rows}x{cols}, found {}x{} with {} weights and {} biases",
                    layer.rows,
                    layer.cols,
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            if layer
                .weights
                .iter()
                .chain(&layer.bias)
                .any(|v| !v.is_finite())
            {
                return Err(Error::Config(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Input(format!(
                "expected {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("feature {i} is not finite")));
        }
        Ok(())
    }

    pub fn trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        Ok(self.trace_unchecked(x))
    }

    pub(crate) fn trace_unchecked(&self, x: &[f64]) -> ForwardTrace {
        let n = self.layers.len();
        let mut pre = Vec::with_capacity(n);
        let mut inputs = Vec::with_capacity(n);
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.rows);
            layer.affine_into(&a, &mut z);
            let next = if i + 1 < n {
                z.iter().map(|&v| relu(v)).collect()
            } else {
                Vec::new()
            };
            inputs.push(std::mem::replace(&mut a, next));
            pre.push(z);
        }
        ForwardTrace { pre, inputs }
    }

    pub(crate) fn logit_unchecked(&self, x: &[f64]) -> f64 {
        let mut a = x.to_vec();
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine_into(&a, &mut z);
            if i < last {
                a.clear();
                a.extend(z.iter().map(|&v| relu(v)));
            }
        }
        z[0]
    }

    /// Output probability, strictly inside `(0, 1)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(clamp_open_unit(sigmoid(self.logit_unchecked(x))))
    }

    pub fn predict(&self, x: &[f64]) -> Result<bool> {
        Ok(self.forward(x)? > DECISION_THRESHOLD)
    }

    /// Exact reverse-mode derivative of the output probability with respect
    /// to each input coordinate. ReLU'(0) is taken as 0.
    pub fn input_gradient(&self, x: &[f64]) -> Result<InputGradient> {
        self.check_input(x)?;
        let trace = self.trace_unchecked(x);
        Ok(InputGradient {
            values: self.backprop_to_input(&trace),
        })
    }

    fn backprop_to_input(&self, trace: &ForwardTrace) -> Vec<f64> {
        let mut delta = vec![sigmoid_derivative(trace.logit())];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let mut upstream = vec![0.0; layer.cols];
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                for (u, w) in upstream.iter_mut().zip(row) {
                    *u += d * w;
                }
            }
            if l > 0 {
                for (u, z) in upstream.iter_mut().zip(&trace.pre[l - 1]) {
                    if *z <= 0.0 {
                        *u = 0.0;
                    }
                }
            }
            delta = upstream;
        }
        delta
    }
}

/// `d(probability)/d(feature)` for every input feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputGradient {
    pub values: Vec<f64>,
}

impl InputGradient {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.abs()).collect()
    }
}

#[inline]
pub(crate) fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `σ(z)(1 − σ(z))`, evaluated as `σ(z)σ(−z)` to keep precision in the tails.
#[inline]
pub fn sigmoid_derivative(z: f64) -> f64 {
    sigmoid(z) * sigmoid(-z)
}

#[inline]
fn clamp_open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}
