//! Small fully connected softmax classifier trained by minibatch SGD on
//! cross-entropy, with hand-written backpropagation.
//!
//! Labels are class indices in `[0, K)` where `K` is the last layer size.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::Accuracy;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    /// Input dimension, hidden sizes, class count.
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weights start uniform in `±scale / sqrt(fan_in)`; biases start at zero.
    pub weight_init_scale: f64,
    pub seed: u64,
}

impl MlpConfig {
    /// `input → 128 relu → classes`, lr 0.05, batch 64, 30 epochs.
    pub fn desk_default(input: usize, classes: usize) -> Self {
        Self {
            layer_sizes: vec![input, 128, classes],
            activation: Activation::Relu,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 64,
            weight_init_scale: 1.0,
            seed: 0,
        }
    }

    pub fn classes(&self) -> usize {
        *self.layer_sizes.last().unwrap_or(&0)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes.first().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::config(format!("invalid layer sizes {:?}", self.layer_sizes)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config(format!("learning rate {} is invalid", self.learning_rate)));
        }
        Ok(())
    }
}

/// Dense layer with a row-major `outputs × inputs` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.biases)
                .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b),
        );
    }

    /// `Wᵀ delta`
    fn backward_input(&self, delta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.inputs];
        for (row, &d) in self.weights.chunks_exact(self.inputs).zip(delta) {
            if d != 0.0 {
                for (gi, w) in g.iter_mut().zip(row) {
                    *gi += d * w;
                }
            }
        }
        g
    }
}

/// Per-layer weight and bias gradients, same layout as [`Layer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &MlpModel) -> Self {
        Self {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub config: MlpConfig,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_softmax_at(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits[y] - lse
}

impl MlpModel {
    pub fn zeros(config: &MlpConfig) -> Result<Self> {
        config.validate()?;
        let layers = config.layer_sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self { layers, config: config.clone() })
    }

    /// Seeded scaled-uniform initialization.
    pub fn init(config: &MlpConfig) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let mut r = rng::rng_from(rng::derive_seed(config.seed, &[rng::stream::INIT]));
        for layer in &mut model.layers {
            let bound = config.weight_init_scale / (layer.inputs as f64).sqrt();
            if bound > 0.0 {
                for w in &mut layer.weights {
                    *w = r.random_range(-bound..=bound);
                }
            }
        }
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: x.len() });
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.classes() {
            return Err(Error::LabelOutOfRange { label: y as i32, classes: self.classes() });
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds the logits.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().expect("input pushed"), &mut out);
            if i < last {
                let act = self.config.activation;
                out.iter_mut().for_each(|v| *v = act.apply(*v));
            }
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.activations(x).pop().expect("logits"))
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let logits = self.logits(x)?;
        Ok(argmax(&logits))
    }

    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        Ok(-log_softmax_at(&self.logits(x)?, y))
    }

    /// Backpropagates `d_logits` through the network, accumulating weight
    /// gradients into `grads` when given, and returns the input gradient.
    fn backprop(&self, acts: &[Vec<f64>], d_logits: Vec<f64>, mut grads: Option<&mut Gradients>) -> Vec<f64> {
        let mut delta = d_logits;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            if let Some(g) = grads.as_deref_mut() {
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &mut g.weights[l][o * layer.inputs..(o + 1) * layer.inputs];
                        for (gw, v) in row.iter_mut().zip(input) {
                            *gw += d * v;
                        }
                    }
                    g.biases[l][o] += d;
                }
            }
            let mut prev = layer.backward_input(&delta);
            if l > 0 {
                let act = self.config.activation;
                for (p, &a) in prev.iter_mut().zip(input) {
                    *p *= act.derivative_from_output(a);
                }
            }
            delta = prev;
        }
        delta
    }

    /// Cross-entropy loss at `(x, y)` with its gradient with respect to `x`.
    pub fn loss_and_input_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        self.check_label(y)?;
        let acts = self.activations(x);
        let logits = acts.last().expect("logits");
        let loss = -log_softmax_at(logits, y);
        let mut d = softmax(logits);
        d[y] -= 1.0;
        Ok((loss, self.backprop(&acts, d, None)))
    }

    pub fn input_gradient(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        Ok(self.loss_and_input_gradient(x, y)?.1)
    }

    /// Loss and parameter gradients for a single example.
    pub fn gradients(&self, x: &[f64], y: usize) -> Result<(f64, Gradients)> {
        self.check_dim(x)?;
        self.check_label(y)?;
        let mut g = Gradients::zeros_like(self);
        let acts = self.activations(x);
        let logits = acts.last().expect("logits");
        let loss = -log_softmax_at(logits, y);
        let mut d = softmax(logits);
        d[y] -= 1.0;
        self.backprop(&acts, d, Some(&mut g));
        Ok((loss, g))
    }

    /// `logit[pos] - logit[neg]` and its input gradient.
    pub fn margin_and_gradient(&self, x: &[f64], pos: usize, neg: usize) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        self.check_label(pos)?;
        self.check_label(neg)?;
        let acts = self.activations(x);
        let logits = acts.last().expect("logits");
        let margin = logits[pos] - logits[neg];
        let mut d = vec![0.0; logits.len()];
        d[pos] += 1.0;
        d[neg] -= 1.0;
        Ok((margin, self.backprop(&acts, d, None)))
    }

    fn sgd_step(&mut self, grads: &Gradients, scale: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grads.weights[l]) {
                *w -= scale * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(&grads.biases[l]) {
                *b -= scale * g;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&WeightBundle {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: WeightBundle = serde_json::from_str(text)?;
        if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
            return Err(Error::Parse(format!("unsupported weight bundle {} v{}", bundle.format, bundle.version)));
        }
        let m = bundle.model;
        let expected: Vec<(usize, usize)> = m.config.layer_sizes.windows(2).map(|w| (w[0], w[1])).collect();
        let actual: Vec<(usize, usize)> = m.layers.iter().map(|l| (l.inputs, l.outputs)).collect();
        if expected != actual
            || m.layers.iter().any(|l| l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs)
        {
            return Err(Error::Parse("weight bundle shapes do not match layer_sizes".into()));
        }
        Ok(m)
    }
}

const BUNDLE_FORMAT: &str = "duplab-mlp";
const BUNDLE_VERSION: u32 = 1;

/// On-disk layout: `{"format": "duplab-mlp", "version": 1, "model": {...}}`.
#[derive(Serialize, Deserialize)]
struct WeightBundle {
    format: String,
    version: u32,
    model: MlpModel,
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) }).0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
}

/// Converts dataset labels to class indices, rejecting out-of-range labels.
pub(crate) fn class_indices(dataset: &LabeledDataset, classes: usize) -> Result<Vec<usize>> {
    dataset
        .samples()
        .iter()
        .map(|s| {
            usize::try_from(s.label)
                .ok()
                .filter(|&l| l < classes)
                .ok_or(Error::LabelOutOfRange { label: s.label, classes })
        })
        .collect()
}

/// Called once per minibatch with the current model, the batch inputs (which
/// it may overwrite), their labels and a seed unique to the batch.
pub type BatchHook<'a> = dyn FnMut(&MlpModel, &mut [Vec<f64>], &[usize], u64) -> Result<()> + 'a;

/// Minibatch SGD with a per-batch input hook; the shared loop behind
/// standard and adversarial training.
pub fn train_with_hook(
    dataset: &LabeledDataset,
    config: &MlpConfig,
    hook: &mut BatchHook<'_>,
) -> Result<(MlpModel, TrainLog)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = class_indices(dataset, config.classes())?;
    let d = dataset.dim().expect("non-empty");
    if d != config.input_dim() {
        return Err(Error::DimensionMismatch { expected: config.input_dim(), actual: d });
    }
    let mut model = MlpModel::init(config)?;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        let mut r = rng::rng_from(rng::derive_seed(config.seed, &[rng::stream::SHUFFLE, epoch as u64]));
        order.shuffle(&mut r);
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let mut inputs: Vec<Vec<f64>> = chunk.iter().map(|&i| dataset.samples()[i].features.clone()).collect();
            let ys: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let batch_seed = rng::derive_seed(config.seed, &[rng::stream::ATTACK, epoch as u64, b as u64]);
            hook(&model, &mut inputs, &ys, batch_seed)?;
            let mut grads = Gradients::zeros_like(&model);
            for (x, &y) in inputs.iter().zip(&ys) {
                let acts = model.activations(x);
                let logits = acts.last().expect("logits");
                loss_sum -= log_softmax_at(logits, y);
                hits += usize::from(argmax(logits) == y);
                let mut dl = softmax(logits);
                dl[y] -= 1.0;
                model.backprop(&acts, dl, Some(&mut grads));
            }
            model.sgd_step(&grads, config.learning_rate / chunk.len() as f64);
        }
        if !model.is_finite() {
            return Err(Error::config(format!("training diverged at epoch {epoch}")));
        }
        log.loss.push(loss_sum / dataset.len() as f64);
        log.train_accuracy.push(hits as f64 / dataset.len() as f64);
    }
    Ok((model, log))
}

pub fn train_standard(dataset: &LabeledDataset, config: &MlpConfig) -> Result<(MlpModel, TrainLog)> {
    train_with_hook(dataset, config, &mut |_, _, _, _| Ok(()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: Accuracy,
    pub mean_loss: f64,
}

/// Accuracy (per class index) and mean cross-entropy over `dataset`.
pub fn evaluate(model: &MlpModel, dataset: &LabeledDataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = class_indices(dataset, model.classes())?;
    let mut loss = 0.0;
    let mut pairs = Vec::with_capacity(labels.len());
    for (s, &y) in dataset.samples().iter().zip(&labels) {
        let logits = model.logits(&s.features)?;
        loss -= log_softmax_at(&logits, y);
        pairs.push((y as i32, argmax(&logits) as i32));
    }
    Ok(Evaluation { accuracy: Accuracy::from_pairs(pairs)?, mean_loss: loss / labels.len() as f64 })
}
