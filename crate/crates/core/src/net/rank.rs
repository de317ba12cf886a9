//! Numerical rank of layer operators and collision witnesses.
//!
//! A layer with `rank(w_k) < d_{k-1}` has a non-trivial right null space, so
//! two distinct inputs differing by a null vector produce identical outputs:
//! the layer loses information. [`collision_witness`] constructs that pair
//! explicitly.

use nalgebra::{DMatrix, DVector};

use super::{Layer, NetError};
use crate::tensor::Tensor;

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankReport {
    pub rank: usize,
    /// `rank < in_dim`.
    pub is_contraction: bool,
}

struct Spectrum {
    singular: Vec<f64>,
    /// Right singular vectors as columns, one per entry of `singular`.
    v: DMatrix<f64>,
}

/// Full SVD of the operator, padded with zero rows so every right singular
/// vector (including the null space) is available.
fn spectrum(m: &DMatrix<f64>) -> Spectrum {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    Spectrum {
        singular: svd.singular_values.iter().copied().collect(),
        v: v_t.transpose(),
    }
}

fn numerical_rank(singular: &[f64], tol: f64) -> usize {
    let max = singular.iter().copied().fold(0.0, f64::max);
    singular.iter().filter(|&&s| s > tol * max).count()
}

fn operator(layer: &Layer) -> Result<DMatrix<f64>, NetError> {
    layer
        .operator_matrix()
        .ok_or(NetError::Inapplicable(layer.kind().name()))
}

/// Counts singular values above `tol` times the largest one.
///
/// Pooling layers have no weight matrix and are rejected; they are
/// contraction layers by construction.
pub fn weight_rank(layer: &Layer, tol: f64) -> Result<RankReport, NetError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(NetError::InvalidLayer(format!(
            "rank tolerance must be positive, got {tol}"
        )));
    }
    let m = operator(layer)?;
    let rank = numerical_rank(&spectrum(&m).singular, tol);
    Ok(RankReport {
        rank,
        is_contraction: rank < layer.in_dim(),
    })
}

/// A second input `x' != x` whose layer output equals that of `x` within `tol`.
///
/// `tol` serves both as the relative rank threshold and as the maximum
/// allowed absolute output discrepancy. Returns `None` when the operator has
/// full column rank.
pub fn collision_witness(layer: &Layer, x: &[f64], tol: f64) -> Result<Option<Tensor>, NetError> {
    if x.len() != layer.in_dim() {
        return Err(NetError::Shape {
            layer: 0,
            expected: layer.in_dim(),
            found: x.len(),
        });
    }
    let m = operator(layer)?;
    let spec = spectrum(&m);
    let max = spec.singular.iter().copied().fold(0.0, f64::max);
    let null = spec
        .singular
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= tol * max)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let Some(idx) = null else {
        return Ok(None);
    };
    let alpha: DVector<f64> = spec.v.column(idx).into_owned();
    let shifted: Vec<f64> = x.iter().zip(alpha.iter()).map(|(a, b)| a + b).collect();
    let original = Tensor::new(vec![1, x.len()], x.to_vec())?;
    let witness = Tensor::new(vec![1, x.len()], shifted)?;
    if witness == original {
        return Ok(None);
    }
    let gap = layer.apply(&original)?.max_abs_diff(&layer.apply(&witness)?);
    Ok((gap <= tol).then_some(witness))
}
