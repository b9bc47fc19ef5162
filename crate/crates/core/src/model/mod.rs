//! Small fully-connected classifier with hand-written backpropagation.
//!
//! Hidden layers use `tanh`; the output layer feeds a softmax with
//! cross-entropy loss. All parameters live in one flat [`ParamVector`],
//! which is also what the federation layer aggregates and personalizes.

mod format;
mod params;

pub use format::{read_dataset, read_model, write_dataset, write_model};
pub use params::{param_count, Layer, ParamVector};

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labelled feature rows. Rows `0..n_train` form the training split, the
/// rest the test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    n_train: usize,
}

impl Dataset {
    pub fn new(
        dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        n_train: usize,
    ) -> Result<Self> {
        if dim == 0 || classes == 0 {
            return Err(Error::usage("dataset dimension and class count must be positive"));
        }
        if features.len() != dim * labels.len() {
            return Err(Error::usage(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if n_train > labels.len() {
            return Err(Error::usage("training split larger than dataset"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::usage(format!("label {bad} out of range for {classes} classes")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::usage("dataset contains non-finite features"));
        }
        Ok(Self {
            dim,
            classes,
            features,
            labels,
            n_train,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn train_rows(&self) -> Range<usize> {
        0..self.n_train
    }

    pub fn test_rows(&self) -> Range<usize> {
        self.n_train..self.labels.len()
    }

    /// Histogram of labels over every row.
    pub fn label_histogram(&self) -> Vec<u64> {
        let mut h = vec![0u64; self.classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }
}

/// Local SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub local_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            local_epochs: 10,
            batch_size: 20,
            learning_rate: 0.05,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
pub fn init_model<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Result<ParamVector> {
    let mut p = ParamVector::zeros(shape)?;
    let mut at = 0;
    let values = p.values_mut();
    for w in shape.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in &mut values[at..at + fan_in * fan_out] {
            *v = rng.random_range(-bound..bound);
        }
        at += fan_in * fan_out + fan_out;
    }
    Ok(p)
}

/// Activations of every layer for one input; the last entry holds logits.
pub(crate) fn forward(shape: &[usize], values: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
    let depth = shape.len() - 1;
    let mut acts = Vec::with_capacity(depth + 1);
    acts.push(input.to_vec());
    let mut at = 0;
    for (l, w) in shape.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &values[at..at + fan_in * fan_out];
        let bias = &values[at + fan_in * fan_out..at + fan_in * fan_out + fan_out];
        at += fan_in * fan_out + fan_out;
        let prev = &acts[l];
        let mut out: Vec<f64> = (0..fan_out)
            .map(|o| {
                bias[o]
                    + weights[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(prev)
                        .map(|(w, x)| w * x)
                        .sum::<f64>()
            })
            .collect();
        if l + 1 < depth {
            out.iter_mut().for_each(|z| *z = z.tanh());
        }
        acts.push(out);
    }
    acts
}

/// Accumulates the parameter gradient for one example into `grad` given the
/// gradient with respect to the logits, and returns the input gradient.
pub(crate) fn backward(
    shape: &[usize],
    values: &[f64],
    acts: &[Vec<f64>],
    d_logits: &[f64],
    grad: &mut [f64],
) -> Vec<f64> {
    // Offsets of each layer's weight block.
    let mut offsets = Vec::with_capacity(shape.len() - 1);
    let mut at = 0;
    for w in shape.windows(2) {
        offsets.push(at);
        at += w[0] * w[1] + w[1];
    }
    let mut delta = d_logits.to_vec();
    for l in (0..shape.len() - 1).rev() {
        let (fan_in, fan_out) = (shape[l], shape[l + 1]);
        let base = offsets[l];
        let input = &acts[l];
        for o in 0..fan_out {
            let d = delta[o];
            if d != 0.0 {
                let row = &mut grad[base + o * fan_in..base + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            grad[base + fan_in * fan_out + o] += d;
        }
        let weights = &values[base..base + fan_in * fan_out];
        let mut d_input = vec![0.0; fan_in];
        for o in 0..fan_out {
            let d = delta[o];
            if d != 0.0 {
                for (di, w) in d_input.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                    *di += d * w;
                }
            }
        }
        if l > 0 {
            // `input` is a tanh output.
            for (di, a) in d_input.iter_mut().zip(input) {
                *di *= 1.0 - a * a;
            }
        }
        delta = d_input;
    }
    delta
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

fn check_compatible(model: &ParamVector, data: &Dataset) -> Result<()> {
    if model.input_dim() != data.dim() {
        return Err(Error::usage(format!(
            "model expects {} features, dataset has {}",
            model.input_dim(),
            data.dim()
        )));
    }
    if model.output_dim() != data.classes() {
        return Err(Error::usage(format!(
            "model emits {} classes, dataset has {}",
            model.output_dim(),
            data.classes()
        )));
    }
    Ok(())
}

/// Mean cross-entropy over `rows`.
pub fn loss(model: &ParamVector, data: &Dataset, rows: &[usize]) -> Result<f64> {
    check_compatible(model, data)?;
    if rows.is_empty() {
        return Err(Error::usage("loss over an empty batch"));
    }
    let total: f64 = rows
        .iter()
        .map(|&i| {
            let acts = forward(model.shape(), model.values(), data.row(i));
            let logits = acts.last().expect("output layer");
            log_sum_exp(logits) - logits[data.label(i)]
        })
        .sum();
    Ok(total / rows.len() as f64)
}

/// Mean cross-entropy over `rows` and its exact gradient.
pub fn loss_and_grad(model: &ParamVector, data: &Dataset, rows: &[usize]) -> Result<(f64, ParamVector)> {
    check_compatible(model, data)?;
    if rows.is_empty() {
        return Err(Error::usage("gradient over an empty batch"));
    }
    let shape = model.shape();
    let mut grad = ParamVector::zeros(shape)?;
    let mut total = 0.0;
    for &i in rows {
        let acts = forward(shape, model.values(), data.row(i));
        let logits = acts.last().expect("output layer");
        let y = data.label(i);
        total += log_sum_exp(logits) - logits[y];
        let mut d_logits = softmax(logits);
        d_logits[y] -= 1.0;
        backward(shape, model.values(), &acts, &d_logits, grad.values_mut());
    }
    let n = rows.len() as f64;
    grad.scale(1.0 / n);
    Ok((total / n, grad))
}

/// Central-difference estimate of the loss gradient.
pub fn finite_diff_grad(model: &ParamVector, data: &Dataset, rows: &[usize], step: f64) -> Result<ParamVector> {
    if !(step > 0.0) {
        return Err(Error::usage("finite-difference step must be positive"));
    }
    let mut probe = model.clone();
    let mut grad = ParamVector::zeros(model.shape())?;
    for j in 0..model.len() {
        let orig = probe.values()[j];
        probe.values_mut()[j] = orig + step;
        let up = loss(&probe, data, rows)?;
        probe.values_mut()[j] = orig - step;
        let down = loss(&probe, data, rows)?;
        probe.values_mut()[j] = orig;
        grad.values_mut()[j] = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Result of local training on one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    /// `trained - start`.
    pub delta: ParamVector,
    pub trained: ParamVector,
    /// Mean training-split loss of the trained model.
    pub train_loss: f64,
}

/// Mini-batch SGD for `local_epochs` passes over the training split,
/// reshuffled every epoch. The final short batch is kept.
pub fn av_update<R: Rng + ?Sized>(
    start: &ParamVector,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LocalUpdate> {
    cfg.validate()?;
    check_compatible(start, data)?;
    if data.n_train() == 0 {
        return Err(Error::usage("local training needs a non-empty training split"));
    }
    let mut model = start.clone();
    let mut order: Vec<usize> = data.train_rows().collect();
    for _ in 0..cfg.local_epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size) {
            let (_, grad) = loss_and_grad(&model, data, batch)?;
            model.axpy(-cfg.learning_rate, &grad)?;
        }
    }
    let delta = model.sub(start)?;
    // Rebuild from the delta so that `start + delta == trained` holds exactly.
    let trained = start.add(&delta)?;
    let train: Vec<usize> = data.train_rows().collect();
    let train_loss = loss(&trained, data, &train)?;
    Ok(LocalUpdate {
        delta,
        trained,
        train_loss,
    })
}

/// Top-1 accuracy and mean loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Index of the largest logit; ties go to the lowest class.
pub fn predict(model: &ParamVector, input: &[f64]) -> usize {
    let acts = forward(model.shape(), model.values(), input);
    let logits = acts.last().expect("output layer");
    let mut best = 0;
    for (c, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = c;
        }
    }
    best
}

pub fn evaluate(model: &ParamVector, data: &Dataset, rows: &[usize]) -> Result<Evaluation> {
    check_compatible(model, data)?;
    if rows.is_empty() {
        return Err(Error::usage("evaluation over an empty split"));
    }
    let correct = rows
        .iter()
        .filter(|&&i| predict(model, data.row(i)) == data.label(i))
        .count();
    Ok(Evaluation {
        accuracy: correct as f64 / rows.len() as f64,
        loss: loss(model, data, rows)?,
    })
}

/// Evaluation on the test split.
pub fn evaluate_test(model: &ParamVector, data: &Dataset) -> Result<Evaluation> {
    let rows: Vec<usize> = data.test_rows().collect();
    evaluate(model, data, &rows)
}
