//! Feed-forward network engine.
//!
//! A [`Network`] is an ordered stack of hidden layers `w_1..w_L` followed by a
//! dense head `h`. [`Network::forward`] returns the whole activation chain
//! `T_0..T_L` plus the head logits; [`backward`] computes exact gradients of
//! the mean batch loss by manual back-propagation.

mod arch;
mod layer;
mod loss;
mod rank;
mod record;

pub use arch::{ArchSpec, LayerInit, LayerSpec};
pub use layer::{Activation, ConvGeometry, Layer, LayerKind, PoolGeometry};
pub use loss::{argmax, log_sum_exp, LossEvaluator, LossKind, DEFAULT_CE_UPPER};
pub use rank::{collision_witness, weight_rank, RankReport, DEFAULT_RANK_TOL};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch at layer {layer}: expected input width {expected}, found {found}")]
    Shape {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("gradient shape {found:?} does not match weight shape {expected:?}")]
    GradientShape { expected: Vec<usize>, found: Vec<usize> },
    #[error("gradient set has {found} entries, network has {expected} layers")]
    GradientCount { expected: usize, found: usize },
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("invalid loss: {0}")]
    InvalidLoss(String),
    #[error("zero_one loss is not differentiable; use it for evaluation only")]
    NonDifferentiable,
    #[error("operation is inapplicable to a {0} layer")]
    Inapplicable(&'static str),
    #[error("label {label} out of range for head with {outputs} outputs")]
    LabelOutOfRange { label: usize, outputs: usize },
    #[error("batch has {rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite activation produced at layer {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("network JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Layer stack `w_1..w_L` plus a dense classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "record::NetworkRecord", into = "record::NetworkRecord")]
pub struct Network {
    layers: Vec<Layer>,
    head: Layer,
}

/// All stages `T_0 = input, T_1, .., T_L` of a forward pass plus head logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationChain {
    pub stages: Vec<Tensor>,
    pub logits: Tensor,
}

impl ActivationChain {
    pub fn depth(&self) -> usize {
        self.stages.len() - 1
    }

    pub fn last_stage(&self) -> &Tensor {
        self.stages.last().expect("chain always holds T_0")
    }
}

/// One gradient tensor per hidden layer (empty for pooling) plus the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Tensor>,
    pub head: Tensor,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Tensor::zeros(l.weights().shape())).collect(),
            head: Tensor::zeros(net.head.weights().shape()),
        }
    }

    /// Layers first, then the head, matching [`Network::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>, head: Layer) -> Result<Self, NetError> {
        if head.kind() != LayerKind::Dense {
            return Err(NetError::InvalidLayer("the head must be a dense layer".into()));
        }
        for k in 1..layers.len() {
            if layers[k - 1].out_dim() != layers[k].in_dim() {
                return Err(NetError::Shape {
                    layer: k,
                    expected: layers[k].in_dim(),
                    found: layers[k - 1].out_dim(),
                });
            }
        }
        if let Some(last) = layers.last() {
            if last.out_dim() != head.in_dim() {
                return Err(NetError::Shape {
                    layer: layers.len(),
                    expected: head.in_dim(),
                    found: last.out_dim(),
                });
            }
        }
        Ok(Self { layers, head })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head(&self) -> &Layer {
        &self.head
    }

    /// Number of hidden layers `L`, excluding the head.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(Layer::in_dim).unwrap_or(self.head.in_dim())
    }

    pub fn num_outputs(&self) -> usize {
        self.head.out_dim()
    }

    pub fn forward(&self, batch: &Tensor) -> Result<ActivationChain, NetError> {
        let mut stages = Vec::with_capacity(self.layers.len() + 1);
        let mut current = batch.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let next = apply_indexed(layer, &current, k)?;
            stages.push(current);
            current = next;
        }
        let logits = apply_indexed(&self.head, &current, self.layers.len())?;
        stages.push(current);
        Ok(ActivationChain { stages, logits })
    }

    /// Head outputs only.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor, NetError> {
        Ok(self.forward(batch)?.logits)
    }

    /// Weights of every trainable layer followed by the head, flattened.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(|l| l.weights().data().iter().copied())
            .collect()
    }

    /// Rebuilds the network with parameters in [`Network::flat_params`] order.
    pub fn with_flat_params(&self, params: &[f64]) -> Result<Self, NetError> {
        let mut offset = 0;
        let mut take = |layer: &Layer| -> Result<Layer, NetError> {
            let len = layer.weights().len();
            if offset + len > params.len() {
                return Err(NetError::GradientCount {
                    expected: offset + len,
                    found: params.len(),
                });
            }
            let w = Tensor::new(layer.weights().shape().to_vec(), params[offset..offset + len].to_vec())?;
            offset += len;
            layer.with_weights(w)
        };
        let layers = self.layers.iter().map(&mut take).collect::<Result<_, _>>()?;
        let head = take(&self.head)?;
        if offset != params.len() {
            return Err(NetError::GradientCount {
                expected: offset,
                found: params.len(),
            });
        }
        Ok(Self { layers, head })
    }

    /// Applies `f(layer, gradient)` to produce new weights for every layer.
    pub(crate) fn map_weights<F>(&self, grads: &Gradients, mut f: F) -> Result<Self, NetError>
    where
        F: FnMut(usize, &Tensor, &Tensor) -> Result<Tensor, NetError>,
    {
        if grads.layers.len() != self.layers.len() {
            return Err(NetError::GradientCount {
                expected: self.layers.len(),
                found: grads.layers.len(),
            });
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, (layer, g)) in self.layers.iter().zip(&grads.layers).enumerate() {
            check_grad_shape(layer.weights(), g)?;
            if layer.is_trainable() {
                layers.push(layer.with_weights(f(k, layer.weights(), g)?)?);
            } else {
                layers.push(layer.clone());
            }
        }
        check_grad_shape(self.head.weights(), &grads.head)?;
        let head = self
            .head
            .with_weights(f(self.layers.len(), self.head.weights(), &grads.head)?)?;
        Ok(Self { layers, head })
    }

    pub fn to_json(&self) -> Result<String, NetError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, NetError> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_grad_shape(w: &Tensor, g: &Tensor) -> Result<(), NetError> {
    if w.shape() != g.shape() {
        return Err(NetError::GradientShape {
            expected: w.shape().to_vec(),
            found: g.shape().to_vec(),
        });
    }
    Ok(())
}

fn apply_indexed(layer: &Layer, input: &Tensor, k: usize) -> Result<Tensor, NetError> {
    layer.apply(input).map_err(|e| relabel(e, k))
}

fn relabel(e: NetError, k: usize) -> NetError {
    match e {
        NetError::Shape { expected, found, .. } => NetError::Shape {
            layer: k,
            expected,
            found,
        },
        NetError::Tensor(TensorError::NonFinite { .. }) => NetError::NonFinite(k),
        other => other,
    }
}

/// Gradients of the mean batch loss with respect to every weight.
pub fn backward(net: &Network, batch: &Tensor, labels: &[usize], loss: &LossEvaluator) -> Result<Gradients, NetError> {
    if !loss.is_differentiable() {
        return Err(NetError::NonDifferentiable);
    }
    let n = batch.rows();
    if n == 0 {
        return Err(NetError::EmptyBatch);
    }
    if labels.len() != n {
        return Err(NetError::LabelCount {
            rows: n,
            labels: labels.len(),
        });
    }
    // forward, keeping pre-activations
    let all: Vec<&Layer> = net.layers.iter().chain(std::iter::once(&net.head)).collect();
    let mut inputs = Vec::with_capacity(all.len());
    let mut pres = Vec::with_capacity(all.len());
    let mut outs = Vec::with_capacity(all.len());
    let mut current = batch.clone();
    for (k, layer) in all.iter().enumerate() {
        let (pre, out) = layer.apply_with_pre(&current).map_err(|e| relabel(e, k))?;
        inputs.push(current);
        pres.push(pre);
        current = out.clone();
        outs.push(out);
    }
    let logits = outs.last().expect("head output");
    let scale = 1.0 / n as f64;
    let mut grad_out = Vec::with_capacity(logits.len());
    for (row, &y) in logits.iter_rows().zip(labels) {
        grad_out.extend(loss.output_gradient(row, y)?.into_iter().map(|g| g * scale));
    }
    let mut weight_grads = vec![Tensor::empty(); all.len()];
    for k in (0..all.len()).rev() {
        let (gw, gin) = all[k].backward(&inputs[k], &pres[k], &outs[k], &grad_out);
        weight_grads[k] = Tensor::from_parts_unchecked(all[k].weights().shape().to_vec(), gw);
        grad_out = gin;
    }
    let head = weight_grads.pop().expect("head gradient");
    let grads = Gradients {
        layers: weight_grads,
        head,
    };
    for t in grads.layers.iter().chain(std::iter::once(&grads.head)) {
        t.ensure_finite()?;
    }
    Ok(grads)
}

/// Mean clipped loss of `net` over a labelled batch.
pub fn mean_loss(net: &Network, batch: &Tensor, labels: &[usize], loss: &LossEvaluator) -> Result<f64, NetError> {
    let logits = net.predict(batch)?;
    if labels.len() != logits.rows() {
        return Err(NetError::LabelCount {
            rows: logits.rows(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let mut total = 0.0;
    for (row, &y) in logits.iter_rows().zip(labels) {
        total += loss.evaluate(row, y)?;
    }
    Ok(total / labels.len() as f64)
}
