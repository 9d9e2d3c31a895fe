use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Feed-forward layout: affine layers with ReLU between them and a softmax
/// head. An empty `hidden_dims` gives a linear softmax classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
}

impl Arch {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "zero-width layer in {} -> {:?} -> {}",
                self.input_dim, self.hidden_dims, self.num_classes
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig("softmax head needs K >= 2".into()));
        }
        Ok(())
    }

    /// Widths from input to logits.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_dims);
        w.push(self.num_classes);
        w
    }

    pub fn num_params(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    /// Offset of the `outputs x inputs` row-major weight block.
    pub weight: usize,
    /// Offset of the bias vector, right after the weights.
    pub bias: usize,
}

fn layer_shapes(arch: &Arch) -> Vec<LayerShape> {
    let mut offset = 0;
    arch.widths()
        .windows(2)
        .map(|w| {
            let shape = LayerShape {
                inputs: w[0],
                outputs: w[1],
                weight: offset,
                bias: offset + w[0] * w[1],
            };
            offset += w[0] * w[1] + w[1];
            shape
        })
        .collect()
}

/// Classifier parameters, stored flat in layer order (weights, then bias).
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Arch,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    pub epoch_stamp: usize,
}

/// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// for weights and biases alike.
pub fn init_model(arch: &Arch, seed: u64) -> Result<Model> {
    arch.validate()?;
    let layers = layer_shapes(arch);
    let mut rng = seed::rng(seed::derive(seed, seed::INIT));
    let mut params = vec![0.0; arch.num_params()];
    for l in &layers {
        let bound = 1.0 / (l.inputs as f64).sqrt();
        for p in &mut params[l.weight..l.bias + l.outputs] {
            *p = rng.random_range(-bound..bound);
        }
    }
    Ok(Model {
        arch: arch.clone(),
        layers,
        params,
        epoch_stamp: 0,
    })
}

impl Model {
    pub fn from_params(arch: &Arch, params: Vec<f64>, epoch_stamp: usize) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.num_params() {
            return Err(Error::InvalidInput(format!(
                "{} parameters for an architecture with {}",
                params.len(),
                arch.num_params()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericInput("model parameters".into()));
        }
        Ok(Self {
            arch: arch.clone(),
            layers: layer_shapes(arch),
            params,
            epoch_stamp,
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Activations of every layer for one sample: index 0 is the input, the
    /// last entry holds the logits, the rest are post-ReLU hidden states.
    pub fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        debug_assert_eq!(x.len(), self.arch.input_dim);
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let input = &acts[li];
            let mut out = self.params[l.bias..l.bias + l.outputs].to_vec();
            for (o, v) in out.iter_mut().enumerate() {
                let row = &self.params[l.weight + o * l.inputs..l.weight + (o + 1) * l.inputs];
                *v += row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
            }
            if li != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().expect("at least one layer")
    }

    /// Backpropagate `d_logits` through the trace. Parameter gradients are
    /// accumulated into `param_grads` when given; the input gradient is
    /// returned.
    pub fn backward(
        &self,
        trace: &[Vec<f64>],
        d_logits: Vec<f64>,
        mut param_grads: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let mut delta = d_logits;
        for (li, l) in self.layers.iter().enumerate().rev() {
            let input = &trace[li];
            if let Some(g) = param_grads.as_deref_mut() {
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &mut g[l.weight + o * l.inputs..l.weight + (o + 1) * l.inputs];
                        row.iter_mut().zip(input).for_each(|(gw, a)| *gw += d * a);
                    }
                    g[l.bias + o] += d;
                }
            }
            let mut d_input = vec![0.0; l.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &self.params[l.weight + o * l.inputs..l.weight + (o + 1) * l.inputs];
                    d_input.iter_mut().zip(row).for_each(|(di, w)| *di += d * w);
                }
            }
            if li > 0 {
                // ReLU gate of the previous layer's output.
                d_input.iter_mut().zip(input).for_each(|(di, &a)| {
                    if a <= 0.0 {
                        *di = 0.0
                    }
                });
            }
            delta = d_input;
        }
        delta
    }

    /// Cross-entropy against `label` for one sample.
    pub fn loss(&self, x: &[f64], label: usize) -> f64 {
        cross_entropy(&self.logits(x), label)
    }

    /// Loss, gradient with respect to every parameter and gradient with
    /// respect to the input, for one sample.
    pub fn loss_gradients(&self, x: &[f64], label: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let trace = self.forward_trace(x);
        let logits = trace.last().expect("logits");
        let loss = cross_entropy(logits, label);
        let mut d = softmax(logits);
        d[label] -= 1.0;
        let mut grads = vec![0.0; self.params.len()];
        let input_grad = self.backward(&trace, d, Some(&mut grads));
        (loss, grads, input_grad)
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

/// `-ln softmax(logits)[label]` via log-sum-exp, so it stays finite when the
/// probability underflows.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    (lse - logits[label]).max(0.0)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-sample softmax outputs against the observed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBatch {
    pub num_classes: usize,
    /// Row-major `n x K` probabilities.
    pub probs: Vec<f64>,
    pub predicted: Vec<u16>,
    pub confidence: Vec<f64>,
    pub loss: Vec<f64>,
}

impl PredictionBatch {
    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predicted.is_empty()
    }

    pub fn probs_row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Build a batch from raw logits (`n x K`, row-major).
    pub fn from_logits(logits: &[f64], num_classes: usize, labels: &[u16]) -> Self {
        let mut out = PredictionBatch {
            num_classes,
            probs: Vec::with_capacity(logits.len()),
            predicted: Vec::with_capacity(labels.len()),
            confidence: Vec::with_capacity(labels.len()),
            loss: Vec::with_capacity(labels.len()),
        };
        for (row, &y) in logits.chunks(num_classes).zip(labels) {
            let p = softmax(row);
            let top = argmax(&p);
            out.predicted.push(top as u16);
            out.confidence.push(p[top]);
            out.loss.push(cross_entropy(row, usize::from(y)));
            out.probs.extend(p);
        }
        out
    }
}

fn check_input(model: &Model, features: &[f32], rows: Option<usize>) -> Result<usize> {
    let d = model.arch.input_dim;
    if features.len() % d != 0 {
        return Err(Error::InvalidArgument(format!(
            "feature buffer of {} values is not a multiple of d = {d}",
            features.len()
        )));
    }
    let n = features.len() / d;
    if let Some(expected) = rows {
        if expected != n {
            return Err(Error::InvalidArgument(format!(
                "{n} feature rows but {expected} labels"
            )));
        }
    }
    if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericInput(format!(
            "input feature of row {} column {}",
            pos / d,
            pos % d
        )));
    }
    Ok(n)
}

fn check_labels(model: &Model, labels: &[u16]) -> Result<()> {
    if let Some(&y) = labels
        .iter()
        .find(|&&y| usize::from(y) >= model.arch.num_classes)
    {
        return Err(Error::InvalidArgument(format!(
            "label {y} >= K = {}",
            model.arch.num_classes
        )));
    }
    Ok(())
}

pub(crate) fn row_f64(features: &[f32], d: usize, i: usize) -> Vec<f64> {
    features[i * d..(i + 1) * d]
        .iter()
        .map(|&v| f64::from(v))
        .collect()
}

/// Probabilities, argmax predictions, confidences and losses against
/// `noisy_labels` for every row of `features`.
pub fn predict_batch(
    model: &Model,
    features: &[f32],
    noisy_labels: &[u16],
) -> Result<PredictionBatch> {
    let n = check_input(model, features, Some(noisy_labels.len()))?;
    check_labels(model, noisy_labels)?;
    let d = model.arch.input_dim;
    let mut logits = Vec::with_capacity(n * model.arch.num_classes);
    for i in 0..n {
        logits.extend(model.logits(&row_f64(features, d, i)));
    }
    Ok(PredictionBatch::from_logits(
        &logits,
        model.arch.num_classes,
        noisy_labels,
    ))
}

/// Argmax predictions only.
pub fn predict_labels(model: &Model, features: &[f32]) -> Result<Vec<u16>> {
    let n = check_input(model, features, None)?;
    let d = model.arch.input_dim;
    Ok((0..n)
        .map(|i| argmax(&model.logits(&row_f64(features, d, i))) as u16)
        .collect())
}

/// `||dL_i/dx_i||_2` for every row, by backpropagation to the input.
pub fn input_gradient_norms(
    model: &Model,
    features: &[f32],
    noisy_labels: &[u16],
) -> Result<Vec<f64>> {
    let n = check_input(model, features, Some(noisy_labels.len()))?;
    check_labels(model, noisy_labels)?;
    let d = model.arch.input_dim;
    Ok((0..n)
        .map(|i| {
            let trace = model.forward_trace(&row_f64(features, d, i));
            let mut delta = softmax(trace.last().expect("logits"));
            delta[usize::from(noisy_labels[i])] -= 1.0;
            let g = model.backward(&trace, delta, None);
            g.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect())
}

/// Post-ReLU activations of the last hidden layer, row-major `n x h`.
pub fn penultimate_features(model: &Model, features: &[f32]) -> Result<Vec<f64>> {
    if model.arch.hidden_dims.is_empty() {
        return Err(Error::UnsupportedArch(
            "linear model has no hidden representation".into(),
        ));
    }
    let n = check_input(model, features, None)?;
    let d = model.arch.input_dim;
    let depth = model.arch.hidden_dims.len();
    let mut out = Vec::with_capacity(n * model.arch.hidden_dims[depth - 1]);
    for i in 0..n {
        let mut trace = model.forward_trace(&row_f64(features, d, i));
        out.append(&mut trace[depth]);
    }
    Ok(out)
}

pub fn evaluate_accuracy(model: &Model, features: &[f32], labels: &[u16]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let n = check_input(model, features, Some(labels.len()))?;
    let predicted = predict_labels(model, features)?;
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(correct as f64 / n as f64)
}
