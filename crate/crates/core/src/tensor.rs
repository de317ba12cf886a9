//! Dense row-major `f64` tensors.
//!
//! Every activation, weight and gradient in the crate lives in a [`Tensor`].
//! Construction validates that the data length matches the shape and that
//! every entry is finite, so a `Tensor` that exists never carries NaN or Inf.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("data length {len} does not match shape {shape:?} (expected {expected})")]
    LengthMismatch {
        shape: Vec<usize>,
        len: usize,
        expected: usize,
    },
    #[error("shape entries must be positive, got {0:?}")]
    ZeroDimension(Vec<usize>),
    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("expected a rank-2 tensor, got shape {0:?}")]
    NotMatrix(Vec<usize>),
    #[error("ragged rows: row {row} has {found} entries, expected {expected}")]
    Ragged { row: usize, expected: usize, found: usize },
}

/// Dense numeric array with an explicit shape.
///
/// The empty tensor (shape `[]`, no data) is used for layers without
/// trainable weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.is_empty() {
            if !data.is_empty() {
                return Err(TensorError::LengthMismatch {
                    shape,
                    len: data.len(),
                    expected: 0,
                });
            }
            return Ok(Self::empty());
        }
        if shape.contains(&0) {
            return Err(TensorError::ZeroDimension(shape));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::LengthMismatch {
                shape,
                len: data.len(),
                expected,
            });
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    pub fn empty() -> Self {
        Self {
            shape: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Builds an `(n, d)` matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TensorError> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * d);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(TensorError::Ragged {
                    row,
                    expected: d,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![rows.len(), d], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Row width of a rank-2 tensor (product of all trailing dimensions).
    pub fn cols(&self) -> usize {
        if self.shape.is_empty() {
            0
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        let c = self.cols().max(1);
        self.data.chunks(c)
    }

    /// Selects rows by index (duplicates allowed) into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Self { shape, data }
    }

    /// Same data, new shape with the same element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Self::new(shape, self.data.clone())
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Crate-internal constructor for data already known to be finite and
    /// shape-consistent.
    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Re-validates finiteness, used after arithmetic that could overflow.
    pub fn ensure_finite(&self) -> Result<(), TensorError> {
        check_finite(&self.data)
    }
}

fn check_finite(data: &[f64]) -> Result<(), TensorError> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(TensorError::NonFinite {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}
