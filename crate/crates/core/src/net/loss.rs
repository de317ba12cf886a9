//! Bounded loss evaluators.
//!
//! Every evaluator declares a closed range `[lower, upper]` and clips its raw
//! value into it, which is what makes the loss sub-Gaussian with constant
//! `(upper - lower) / 2`. Inside the clip region the gradient is the raw
//! gradient; outside it is zero.

use serde::{Deserialize, Serialize};

use super::NetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Misclassification indicator, argmax ties broken to the lowest index.
    ZeroOne,
    /// `-ln softmax(output)[label]`, clipped.
    ClippedCrossEntropy,
    /// `sum_j (output_j - target_j)^2`, clipped. The target is `label as f64`
    /// for single-output heads and the one-hot encoding otherwise.
    SquaredError,
}

pub const DEFAULT_CE_UPPER: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LossRecord", into = "LossRecord")]
pub struct LossEvaluator {
    kind: LossKind,
    lower: f64,
    upper: f64,
}

#[derive(Serialize, Deserialize)]
struct LossRecord {
    kind: LossKind,
    #[serde(default)]
    range: Option<[f64; 2]>,
}

impl TryFrom<LossRecord> for LossEvaluator {
    type Error = NetError;

    fn try_from(r: LossRecord) -> Result<Self, NetError> {
        match (r.kind, r.range) {
            (LossKind::ZeroOne, None) => Ok(Self::zero_one()),
            (LossKind::ClippedCrossEntropy, None) => Ok(Self::clipped_cross_entropy()),
            (LossKind::SquaredError, None) => Self::with_range(LossKind::SquaredError, 0.0, 1.0),
            (kind, Some([a, b])) => Self::with_range(kind, a, b),
        }
    }
}

impl From<LossEvaluator> for LossRecord {
    fn from(l: LossEvaluator) -> Self {
        LossRecord {
            kind: l.kind,
            range: Some([l.lower, l.upper]),
        }
    }
}

impl LossEvaluator {
    pub fn zero_one() -> Self {
        Self {
            kind: LossKind::ZeroOne,
            lower: 0.0,
            upper: 1.0,
        }
    }

    /// Cross-entropy clipped into `[0, 4]`.
    pub fn clipped_cross_entropy() -> Self {
        Self {
            kind: LossKind::ClippedCrossEntropy,
            lower: 0.0,
            upper: DEFAULT_CE_UPPER,
        }
    }

    pub fn with_range(kind: LossKind, lower: f64, upper: f64) -> Result<Self, NetError> {
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(NetError::InvalidLoss(format!(
                "loss range [{lower}, {upper}] is not a proper finite interval"
            )));
        }
        if kind == LossKind::ZeroOne && (lower > 0.0 || upper < 1.0) {
            return Err(NetError::InvalidLoss("zero_one range must contain [0, 1]".into()));
        }
        Ok(Self { kind, lower, upper })
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn is_differentiable(&self) -> bool {
        self.kind != LossKind::ZeroOne
    }

    fn check_label(&self, output: &[f64], label: usize) -> Result<(), NetError> {
        let arity = match self.kind {
            LossKind::SquaredError if output.len() == 1 => usize::MAX,
            _ => output.len(),
        };
        if output.is_empty() || label >= arity {
            return Err(NetError::LabelOutOfRange {
                label,
                outputs: output.len(),
            });
        }
        Ok(())
    }

    fn raw(&self, output: &[f64], label: usize) -> f64 {
        match self.kind {
            LossKind::ZeroOne => {
                if argmax(output) == label {
                    0.0
                } else {
                    1.0
                }
            }
            LossKind::ClippedCrossEntropy => log_sum_exp(output) - output[label],
            LossKind::SquaredError => output
                .iter()
                .enumerate()
                .map(|(j, &o)| {
                    let t = target(output.len(), label, j);
                    (o - t) * (o - t)
                })
                .sum(),
        }
    }

    /// Loss of one head output against its label, always inside `range()`.
    pub fn evaluate(&self, output: &[f64], label: usize) -> Result<f64, NetError> {
        self.check_label(output, label)?;
        Ok(self.raw(output, label).clamp(self.lower, self.upper))
    }

    /// Gradient of the clipped loss with respect to the head output.
    pub fn output_gradient(&self, output: &[f64], label: usize) -> Result<Vec<f64>, NetError> {
        if !self.is_differentiable() {
            return Err(NetError::NonDifferentiable);
        }
        self.check_label(output, label)?;
        let raw = self.raw(output, label);
        if raw <= self.lower || raw >= self.upper {
            return Ok(vec![0.0; output.len()]);
        }
        Ok(match self.kind {
            LossKind::ClippedCrossEntropy => {
                let lse = log_sum_exp(output);
                output
                    .iter()
                    .enumerate()
                    .map(|(j, &o)| (o - lse).exp() - if j == label { 1.0 } else { 0.0 })
                    .collect()
            }
            LossKind::SquaredError => output
                .iter()
                .enumerate()
                .map(|(j, &o)| 2.0 * (o - target(output.len(), label, j)))
                .collect(),
            LossKind::ZeroOne => unreachable!(),
        })
    }
}

fn target(dim: usize, label: usize, j: usize) -> f64 {
    if dim == 1 {
        label as f64
    } else if j == label {
        1.0
    } else {
        0.0
    }
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

/// Max-shifted `ln sum exp(v)`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
