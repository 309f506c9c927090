//! Flat-parameter classifiers: multinomial logistic regression and a ReLU
//! multilayer perceptron, trained with softmax cross-entropy and plain SGD.
//!
//! Parameters live in one [`ParamVector`]. Layer `l` occupies a contiguous
//! block holding its `outputs x inputs` weight matrix (row-major, one row per
//! output unit) followed by its `outputs` biases.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{FedError, Result};
use crate::param::ParamVector;
use crate::rng::{self, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    LogisticRegression,
    Mlp,
}

/// Architecture description. `layers` lists unit counts from the input
/// features to the output classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    kind: ModelKind,
    layers: Vec<usize>,
}

impl ModelSpec {
    pub fn logistic_regression(features: usize, classes: usize) -> Result<Self> {
        Self::new(ModelKind::LogisticRegression, vec![features, classes])
    }

    pub fn mlp(layers: Vec<usize>) -> Result<Self> {
        Self::new(ModelKind::Mlp, layers)
    }

    pub fn new(kind: ModelKind, layers: Vec<usize>) -> Result<Self> {
        if layers.contains(&0) {
            return Err(FedError::config("model.layers", "layer sizes must be positive"));
        }
        match kind {
            ModelKind::LogisticRegression if layers.len() != 2 => {
                return Err(FedError::config(
                    "model.layers",
                    "logistic regression takes exactly [features, classes]",
                ))
            }
            ModelKind::Mlp if layers.len() < 2 => {
                return Err(FedError::config(
                    "model.layers",
                    "an MLP needs at least an input and an output layer",
                ))
            }
            _ => {}
        }
        if layers[layers.len() - 1] < 2 {
            return Err(FedError::config("model.layers", "need at least two classes"));
        }
        Ok(ModelSpec { kind, layers })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn classes(&self) -> usize {
        self.layers[self.layers.len() - 1]
    }

    /// Flattened parameter count `d`.
    pub fn dim(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layer_shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layers.windows(2).map(|w| (w[0], w[1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default = "default_local_iterations")]
    pub local_iterations: usize,
}

fn default_local_iterations() -> usize {
    1
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(FedError::config(
                "training.learning_rate",
                format!("must be a non-negative finite number, got {}", self.learning_rate),
            ));
        }
        if self.batch_size == 0 {
            return Err(FedError::config("training.batch_size", "must be at least 1"));
        }
        if self.local_iterations == 0 {
            return Err(FedError::config("training.local_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// One dense layer, unpacked from a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn unflatten(spec: &ModelSpec, theta: &ParamVector) -> Result<Vec<Layer>> {
    theta.check_len(spec.dim())?;
    let mut offset = 0;
    let layers = spec
        .layer_shapes()
        .map(|(inputs, outputs)| {
            let w_end = offset + inputs * outputs;
            let b_end = w_end + outputs;
            let layer = Layer {
                inputs,
                outputs,
                weights: theta[offset..w_end].to_vec(),
                bias: theta[w_end..b_end].to_vec(),
            };
            offset = b_end;
            layer
        })
        .collect();
    Ok(layers)
}

pub fn flatten(layers: &[Layer]) -> ParamVector {
    let mut out = Vec::with_capacity(layers.iter().map(|l| l.weights.len() + l.bias.len()).sum());
    for layer in layers {
        out.extend_from_slice(&layer.weights);
        out.extend_from_slice(&layer.bias);
    }
    ParamVector::new(out)
}

/// Initial global model. Weights are uniform in `±1/sqrt(fan_in)`; biases are zero.
pub fn init_model(spec: &ModelSpec, seed: u64) -> ParamVector {
    let mut rng = rng::from_seed(seed);
    let mut out = Vec::with_capacity(spec.dim());
    for (inputs, outputs) in spec.layer_shapes() {
        let bound = 1.0 / (inputs as f64).sqrt();
        out.extend((0..inputs * outputs).map(|_| rng.random_range(-bound..=bound)));
        out.extend(std::iter::repeat_n(0.0, outputs));
    }
    ParamVector::new(out)
}

/// Borrowed view of the parameters for a forward/backward pass.
struct LayerView<'a> {
    inputs: usize,
    outputs: usize,
    weights: &'a [f64],
    bias: &'a [f64],
}

fn layer_views<'a>(spec: &ModelSpec, theta: &'a [f64]) -> Vec<LayerView<'a>> {
    let mut offset = 0;
    spec.layer_shapes()
        .map(|(inputs, outputs)| {
            let w_end = offset + inputs * outputs;
            let b_end = w_end + outputs;
            let view = LayerView {
                inputs,
                outputs,
                weights: &theta[offset..w_end],
                bias: &theta[w_end..b_end],
            };
            offset = b_end;
            view
        })
        .collect()
}

/// Forward pass; returns the pre-activations of every layer (the last entry
/// is the logit vector).
fn forward(views: &[LayerView<'_>], x: &[f64]) -> Vec<Vec<f64>> {
    let mut pre = Vec::with_capacity(views.len());
    let mut input: Vec<f64> = x.to_vec();
    for (li, layer) in views.iter().enumerate() {
        let mut z = layer.bias.to_vec();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            *zo += row.iter().zip(&input).map(|(w, a)| w * a).sum::<f64>();
        }
        if li + 1 < views.len() {
            input = z.iter().map(|&v| v.max(0.0)).collect();
        }
        pre.push(z);
    }
    pre
}

/// Numerically stable softmax, in place.
fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logits.iter_mut().for_each(|v| *v /= sum);
}

fn check_batch(spec: &ModelSpec, data: &Dataset, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(FedError::Data("batch is empty".into()));
    }
    if data.dim() != spec.input_dim() {
        return Err(FedError::Data(format!(
            "feature dimension {} does not match model input {}",
            data.dim(),
            spec.input_dim()
        )));
    }
    for &i in indices {
        if i >= data.len() {
            return Err(FedError::Data(format!("sample index {i} out of range")));
        }
        if data.label(i) >= spec.classes() {
            return Err(FedError::Data(format!(
                "label {} outside [0, {})",
                data.label(i),
                spec.classes()
            )));
        }
    }
    Ok(())
}

/// Mean softmax cross-entropy over the batch and its gradient.
pub fn loss_and_gradient(
    theta: &ParamVector,
    spec: &ModelSpec,
    data: &Dataset,
    indices: &[usize],
) -> Result<(f64, ParamVector)> {
    theta.check_len(spec.dim())?;
    check_batch(spec, data, indices)?;

    let views = layer_views(spec, theta);
    let mut grad = vec![0.0; spec.dim()];
    // Offsets of each layer's block inside `grad`.
    let mut offsets = Vec::with_capacity(views.len());
    let mut acc = 0;
    for v in &views {
        offsets.push(acc);
        acc += v.inputs * v.outputs + v.outputs;
    }

    let mut loss = 0.0;
    for &i in indices {
        let x = data.features(i);
        let y = data.label(i);
        let pre = forward(&views, x);

        let mut delta = pre[pre.len() - 1].clone();
        softmax(&mut delta);
        loss -= delta[y].max(f64::MIN_POSITIVE).ln();
        delta[y] -= 1.0;

        for l in (0..views.len()).rev() {
            let layer = &views[l];
            let input: Vec<f64> = if l == 0 {
                x.to_vec()
            } else {
                pre[l - 1].iter().map(|&v| v.max(0.0)).collect()
            };
            let block = &mut grad[offsets[l]..offsets[l] + layer.inputs * layer.outputs + layer.outputs];
            let (gw, gb) = block.split_at_mut(layer.inputs * layer.outputs);
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, a) in row.iter_mut().zip(&input) {
                    *g += d * a;
                }
            }
            if l > 0 {
                let prev = &pre[l - 1];
                let mut next = vec![0.0; layer.inputs];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                for (n, z) in next.iter_mut().zip(prev) {
                    if *z <= 0.0 {
                        *n = 0.0;
                    }
                }
                delta = next;
            }
        }
    }

    let inv = 1.0 / indices.len() as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, ParamVector::new(grad)))
}

/// Local SGD: `E` steps of `theta - lr * grad` over mini-batches drawn without
/// replacement from a freshly shuffled copy of the shard. Returns the full
/// local model, not a delta.
pub fn local_update(
    theta: &ParamVector,
    data: &Dataset,
    shard: &[usize],
    cfg: &TrainingConfig,
    spec: &ModelSpec,
    rng: &mut RngStream,
) -> Result<ParamVector> {
    if shard.is_empty() {
        return Err(FedError::Data("shard holds no samples".into()));
    }
    let mut order = shard.to_vec();
    order.shuffle(rng);
    let batch = cfg.batch_size.min(order.len());
    let mut cursor = 0;

    let mut phi = theta.clone();
    for _ in 0..cfg.local_iterations {
        if cursor + batch > order.len() {
            order.shuffle(rng);
            cursor = 0;
        }
        let (_, grad) = loss_and_gradient(&phi, spec, data, &order[cursor..cursor + batch])?;
        cursor += batch;
        phi = phi.add_scaled(-cfg.learning_rate, &grad);
    }
    Ok(phi)
}

/// Index of the largest logit; ties go to the lowest class.
pub fn predict(theta: &ParamVector, spec: &ModelSpec, x: &[f64]) -> usize {
    let views = layer_views(spec, theta);
    let pre = forward(&views, x);
    let logits = &pre[pre.len() - 1];
    let mut best = 0;
    for (c, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = c;
        }
    }
    best
}

/// Fraction of correctly classified samples.
pub fn evaluate(theta: &ParamVector, spec: &ModelSpec, test: &Dataset) -> Result<f64> {
    theta.check_len(spec.dim())?;
    if test.is_empty() {
        return Err(FedError::Data("test set is empty".into()));
    }
    if test.dim() != spec.input_dim() {
        return Err(FedError::Data(format!(
            "feature dimension {} does not match model input {}",
            test.dim(),
            spec.input_dim()
        )));
    }
    let correct = (0..test.len())
        .filter(|&i| predict(theta, spec, test.features(i)) == test.label(i))
        .count();
    Ok(correct as f64 / test.len() as f64)
}
