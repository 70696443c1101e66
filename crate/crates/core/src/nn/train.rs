use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{relu, sigmoid, Layer, NetworkParams, DECISION_THRESHOLD};
use crate::data::TabularDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            epochs: 40,
            batch_size: 32,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return bad("adam_beta1 must lie in (0, 1)");
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam_beta2 must lie in (0, 1)");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            return bad("adam_epsilon must be positive");
        }
        Ok(())
    }
}

/// Which dataset column a network is trained to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// The outcome label (the classifier `F`).
    #[default]
    Label,
    /// The protected-status column (the protected-status model `A`).
    Protected,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: NetworkParams,
    /// Mean BCE over the whole training set, measured after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Trains `params` on `data` to predict `target`.
pub fn train(
    params: NetworkParams,
    data: &TabularDataset,
    cfg: &TrainConfig,
    target: Target,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    let targets = data.targets(target)?;
    train_on(params, data.features(), data.n_features(), &targets, cfg)
}

/// Trains on a row-major feature matrix. Targets must be exactly 0 or 1.
pub fn train_on(
    mut params: NetworkParams,
    features: &[f64],
    n_features: usize,
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    params.validate()?;
    if n_features != params.input_dim() {
        return Err(Error::Config(format!(
            "network expects {} features, dataset has {n_features}",
            params.input_dim()
        )));
    }
    if features.len() != n_features * targets.len() {
        return Err(Error::Input(format!(
            "{} feature values do not form {} rows of {n_features}",
            features.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    if let Some(i) = targets.iter().position(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::Data(format!(
            "target at row {i} is {}, expected 0 or 1",
            targets[i]
        )));
    }

    let n = targets.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut adam = AdamState::new(&params);
    let mut grads = Gradients::zeros_like(&params);
    let mut scratch = Scratch::default();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            grads.clear();
            let mut loss = 0.0;
            for &i in idx {
                let x = &features[i * n_features..(i + 1) * n_features];
                loss += accumulate_example(&params, x, targets[i], &mut grads, &mut scratch);
            }
            let scale = 1.0 / idx.len() as f64;
            loss *= scale;
            if !loss.is_finite() {
                return Err(Error::Numerical {
                    epoch,
                    batch,
                    detail: format!("batch loss is {loss}"),
                });
            }
            grads.scale(scale);
            adam.step(&mut params, &grads, cfg);
            if !params.is_finite() {
                return Err(Error::Numerical {
                    epoch,
                    batch,
                    detail: "parameters became non-finite".into(),
                });
            }
        }
        let epoch_loss = mean_bce_loss(&params, features, n_features, targets);
        if !epoch_loss.is_finite() {
            return Err(Error::Numerical {
                epoch,
                batch: n.div_ceil(cfg.batch_size) - 1,
                detail: format!("epoch loss is {epoch_loss}"),
            });
        }
        epoch_losses.push(epoch_loss);
    }

    Ok(TrainReport {
        params,
        epoch_losses,
    })
}

/// Numerically stable BCE on a logit: `max(z,0) − z·y + ln(1 + e^−|z|)`.
#[inline]
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

pub fn mean_bce_loss(params: &NetworkParams, features: &[f64], n_features: usize, targets: &[f64]) -> f64 {
    let total: f64 = features
        .chunks_exact(n_features)
        .zip(targets)
        .map(|(x, &y)| bce_from_logit(params.logit_unchecked(x), y))
        .sum();
    total / targets.len() as f64
}

/// Fraction of rows whose hard prediction matches the 0/1 target.
pub fn accuracy(params: &NetworkParams, features: &[f64], n_features: usize, targets: &[f64]) -> f64 {
    if targets.is_empty() {
        return f64::NAN;
    }
    let correct = features
        .chunks_exact(n_features)
        .zip(targets)
        .filter(|(x, &y)| {
            let p = sigmoid(params.logit_unchecked(x));
            (p > DECISION_THRESHOLD) == (y == 1.0)
        })
        .count();
    correct as f64 / targets.len() as f64
}

#[derive(Default)]
struct Scratch {
    pre: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
}

/// Adds one example's loss gradient to `grads`; returns its loss.
fn accumulate_example(
    params: &NetworkParams,
    x: &[f64],
    y: f64,
    grads: &mut Gradients,
    scratch: &mut Scratch,
) -> f64 {
    let n = params.layers.len();
    scratch.pre.resize_with(n, Vec::new);
    scratch.acts.resize_with(n, Vec::new);

    scratch.acts[0].clear();
    scratch.acts[0].extend_from_slice(x);
    for l in 0..n {
        params.layers[l].affine_into(&scratch.acts[l], &mut scratch.pre[l]);
        if l + 1 < n {
            let next = &mut scratch.acts[l + 1];
            next.clear();
            next.extend(scratch.pre[l].iter().map(|&z| relu(z)));
        }
    }

    let z = scratch.pre[n - 1][0];
    let loss = bce_from_logit(z, y);

    // dL/dz for sigmoid + BCE
    let mut delta = vec![sigmoid(z) - y];
    for l in (0..n).rev() {
        let layer = &params.layers[l];
        let g = &mut grads.layers[l];
        let a = &scratch.acts[l];
        for (r, d) in delta.iter().enumerate() {
            g.bias[r] += d;
            let row = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
            for (gw, ai) in row.iter_mut().zip(a) {
                *gw += d * ai;
            }
        }
        if l == 0 {
            break;
        }
        let mut upstream = vec![0.0; layer.cols];
        for (r, d) in delta.iter().enumerate() {
            let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
            for (u, w) in upstream.iter_mut().zip(row) {
                *u += d * w;
            }
        }
        for (u, zp) in upstream.iter_mut().zip(&scratch.pre[l - 1]) {
            if *zp <= 0.0 {
                *u = 0.0;
            }
        }
        delta = upstream;
    }
    loss
}

/// Loss gradients with the same layout as the parameters.
#[derive(Debug, Clone)]
pub(crate) struct Gradients {
    pub(crate) layers: Vec<Layer>,
}

impl Gradients {
    pub(crate) fn zeros_like(params: &NetworkParams) -> Self {
        Gradients {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v *= s);
            l.bias.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        let zeros: Vec<Layer> = params
            .layers
            .iter()
            .map(|l| Layer::zeros(l.rows, l.cols))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies one Adam update given per-layer gradients laid out like
    /// `params.layers`.
    pub fn step_with(&mut self, params: &mut NetworkParams, grads: &[Layer], cfg: &TrainConfig) {
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = cfg.learning_rate;

        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
        };

        for (((layer, g), m), v) in params
            .layers
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in layer
                .weights
                .iter_mut()
                .zip(&g.weights)
                .zip(&mut m.weights)
                .zip(&mut v.weights)
            {
                update(p, m, v, g);
            }
            for (((p, &g), m), v) in layer
                .bias
                .iter_mut()
                .zip(&g.bias)
                .zip(&mut m.bias)
                .zip(&mut v.bias)
            {
                update(p, m, v, g);
            }
        }
    }

    fn step(&mut self, params: &mut NetworkParams, grads: &Gradients, cfg: &TrainConfig) {
        self.step_with(params, &grads.layers, cfg);
    }
}
