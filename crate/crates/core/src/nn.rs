//! Dense feed-forward binary classifier trained with mini-batch Adam.
//!
//! Hidden layers use the rectifier, the single output unit the logistic
//! function, and training minimizes mean binary cross-entropy. A pair is
//! classified as a match when the output probability is at least 0.5.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default layer sizes after the input layer.
pub const DEFAULT_HIDDEN: [usize; 3] = [21, 42, 84];

pub const MATCH_THRESHOLD: f64 = 0.5;

const HIDDEN_ACTIVATION: &str = "relu";
const OUTPUT_ACTIVATION: &str = "sigmoid";

/// One dense layer: `out = W · in + b`, with `W` stored row-major (`rows × cols`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    #[inline]
    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.cols).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b
        }));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub layers: Vec<Layer>,
    pub feature_order: Vec<String>,
    pub train_meta: Option<TrainMeta>,
    /// Fingerprint of the encoding and feature configuration the model was trained under.
    pub fingerprint: Option<String>,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a 0/1 target, computed stably.
#[inline]
fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl NeuralModel {
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        if let Some(first) = self.layers.first() {
            dims.push(first.cols);
        }
        dims.extend(self.layers.iter().map(|l| l.rows));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.cols)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Data("model has no layers".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weights.len() != layer.rows * layer.cols || layer.bias.len() != layer.rows {
                return Err(Error::Data(format!(
                    "layer {i}: declared {}x{} but has {} weights and {} biases",
                    layer.rows,
                    layer.cols,
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            if i > 0 && layer.cols != self.layers[i - 1].rows {
                return Err(Error::Data(format!("layer {i} does not chain with layer {}", i - 1)));
            }
            if layer.weights.iter().chain(&layer.bias).any(|w| !w.is_finite()) {
                return Err(Error::Data(format!("layer {i} has non-finite parameters")));
            }
        }
        if self.layers.last().map(|l| l.rows) != Some(1) {
            return Err(Error::Data("output layer must have exactly one unit".into()));
        }
        if self.feature_order.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: self.feature_order.len(),
            });
        }
        Ok(())
    }

    /// Output logit for one input.
    pub fn logit(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: input.len() });
        }
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&cur, &mut next);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur[0])
    }

    /// Match probability in (0, 1).
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.logit(input).map(sigmoid)
    }

    pub fn is_match(&self, input: &[f64]) -> Result<bool> {
        Ok(self.forward(input)? >= MATCH_THRESHOLD)
    }

    /// Mean binary cross-entropy over `data`.
    pub fn loss(&self, data: &[Example]) -> Result<f64> {
        let mut total = 0.0;
        for ex in data {
            total += bce_with_logit(self.logit(&ex.features)?, ex.label);
        }
        Ok(total / data.len().max(1) as f64)
    }

    pub fn accuracy(&self, data: &[Example]) -> Result<f64> {
        let mut correct = 0usize;
        for ex in data {
            if self.is_match(&ex.features)? == (ex.label >= 0.5) {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len().max(1) as f64)
    }

    /// Mean loss over `batch` and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &[&Example]) -> (f64, Vec<Layer>) {
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
        let scale = 1.0 / batch.len() as f64;
        let last = self.layers.len() - 1;
        let mut loss = 0.0;
        // activations[0] is the input; pre[i] the pre-activation of layer i
        let mut activations: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len() + 1];
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        let mut delta = Vec::new();
        let mut prev_delta = Vec::new();

        for ex in batch {
            activations[0].clear();
            activations[0].extend_from_slice(&ex.features);
            for (i, layer) in self.layers.iter().enumerate() {
                let (lower, upper) = activations.split_at_mut(i + 1);
                layer.apply(&lower[i], &mut pre[i]);
                upper[0].clear();
                if i < last {
                    upper[0].extend(pre[i].iter().map(|v| v.max(0.0)));
                } else {
                    upper[0].extend_from_slice(&pre[i]);
                }
            }
            let z = pre[last][0];
            loss += bce_with_logit(z, ex.label);

            delta.clear();
            delta.push((sigmoid(z) - ex.label) * scale);
            for i in (0..self.layers.len()).rev() {
                let layer = &self.layers[i];
                let grad = &mut grads[i];
                let input = &activations[i];
                for (r, d) in delta.iter().enumerate() {
                    grad.bias[r] += d;
                    let row = &mut grad.weights[r * layer.cols..(r + 1) * layer.cols];
                    row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
                }
                if i == 0 {
                    break;
                }
                prev_delta.clear();
                prev_delta.resize(layer.cols, 0.0);
                for (r, d) in delta.iter().enumerate() {
                    let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    prev_delta.iter_mut().zip(row).for_each(|(p, w)| *p += w * d);
                }
                for (p, z) in prev_delta.iter_mut().zip(&pre[i - 1]) {
                    if *z <= 0.0 {
                        *p = 0.0;
                    }
                }
                std::mem::swap(&mut delta, &mut prev_delta);
            }
        }
        (loss * scale, grads)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut out, &ModelFile::from(self)).map_err(|e| Error::json(path, e))?;
        out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let parsed: ModelFile =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::json(path, e))?;
        parsed.into_model().map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// Serialized form of a model.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    dims: Vec<usize>,
    layers: Vec<Layer>,
    hidden_activation: String,
    output_activation: String,
    feature_order: Vec<String>,
    train_meta: Option<TrainMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fingerprint: Option<String>,
}

impl From<&NeuralModel> for ModelFile {
    fn from(m: &NeuralModel) -> Self {
        ModelFile {
            dims: m.dims(),
            layers: m.layers.clone(),
            hidden_activation: HIDDEN_ACTIVATION.into(),
            output_activation: OUTPUT_ACTIVATION.into(),
            feature_order: m.feature_order.clone(),
            train_meta: m.train_meta,
            fingerprint: m.fingerprint.clone(),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<NeuralModel> {
        if self.hidden_activation != HIDDEN_ACTIVATION || self.output_activation != OUTPUT_ACTIVATION {
            return Err(Error::Data(format!(
                "unsupported activations {}/{}",
                self.hidden_activation, self.output_activation
            )));
        }
        let model = NeuralModel {
            layers: self.layers,
            feature_order: self.feature_order,
            train_meta: self.train_meta,
            fingerprint: self.fingerprint,
        };
        model.validate()?;
        if model.dims() != self.dims {
            return Err(Error::Data(format!(
                "declared dims {:?} do not match layer shapes {:?}",
                self.dims,
                model.dims()
            )));
        }
        Ok(model)
    }
}

/// He-uniform weights (limit `sqrt(6 / fan_in)`), zero biases.
pub fn init_model(dims: &[usize], feature_order: Vec<String>, seed: u64) -> Result<NeuralModel> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(Error::Config(format!("invalid layer sizes {dims:?}")));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::Config(format!("output layer must have one unit, got {dims:?}")));
    }
    if feature_order.len() != dims[0] {
        return Err(Error::DimensionMismatch { expected: dims[0], actual: feature_order.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (cols, rows) = (w[0], w[1]);
            let limit = (6.0 / cols as f64).sqrt();
            let weights = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
            Layer { rows, cols, weights, bias: vec![0.0; rows] }
        })
        .collect();
    Ok(NeuralModel { layers, feature_order, train_meta: None, fingerprint: None })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    /// 1.0 for a match, 0.0 otherwise.
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            epochs: 50,
            batch_size: 5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            init_seed: 0,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("learning_rate must be > 0 and batch_size >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be > 0".into()));
        }
        Ok(())
    }
}

/// Mini-batch Adam on mean binary cross-entropy, starting from `init`.
pub fn train_model(data: &[Example], cfg: &TrainConfig, init: &NeuralModel) -> Result<NeuralModel> {
    cfg.validate()?;
    init.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for ex in data {
        if ex.features.len() != init.input_dim() {
            return Err(Error::DimensionMismatch { expected: init.input_dim(), actual: ex.features.len() });
        }
        if ex.label != 0.0 && ex.label != 1.0 {
            return Err(Error::Data(format!("label {} is not 0 or 1", ex.label)));
        }
    }

    let mut model = init.clone();
    let mut first: Vec<Layer> = model.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
    let mut second = first.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0i32;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, grads) = model.loss_and_gradient(&batch);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            step += 1;
            let correction1 = 1.0 - cfg.beta1.powi(step);
            let correction2 = 1.0 - cfg.beta2.powi(step);
            for (((layer, g), m), v) in model.layers.iter_mut().zip(&grads).zip(&mut first).zip(&mut second) {
                let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
                let gs = g.weights.iter().chain(&g.bias);
                let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
                let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
                for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                    let m_hat = *m / correction1;
                    let v_hat = *v / correction2;
                    *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
                }
            }
        }
    }
    if model.layers.iter().any(|l| l.weights.iter().chain(&l.bias).any(|w| !w.is_finite())) {
        return Err(Error::Divergence { epoch: cfg.epochs, loss: f64::NAN });
    }
    model.train_meta = Some(TrainMeta {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        init_seed: cfg.init_seed,
        shuffle_seed: cfg.shuffle_seed,
    });
    Ok(model)
}
