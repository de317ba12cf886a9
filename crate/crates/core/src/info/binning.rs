//! Equal-width discretization of continuous layer activations.

use serde::{Deserialize, Serialize};

use super::InfoError;
use crate::tensor::Tensor;

pub const DEFAULT_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum RangePolicy {
    /// Per-dimension `[min, max]` of the values being binned.
    #[default]
    Observed,
    /// A shared `[lo, hi]`; values outside fall into the edge bins.
    Fixed { lo: f64, hi: f64 },
}

fn check(stage: &Tensor, bins: usize, policy: RangePolicy) -> Result<(), InfoError> {
    if bins < 2 || bins > usize::from(u16::MAX) {
        return Err(InfoError::Binning(format!(
            "bins_per_dim must be in [2, 65535], got {bins}"
        )));
    }
    if stage.shape().len() != 2 {
        return Err(InfoError::Binning(format!(
            "expected an (examples, dims) matrix, got shape {:?}",
            stage.shape()
        )));
    }
    if let RangePolicy::Fixed { lo, hi } = policy {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(InfoError::Binning(format!("fixed range [{lo}, {hi}] is empty")));
        }
    }
    Ok(())
}

/// Per-example vector of bin indices, one per dimension.
///
/// Bin `i` covers `[lo + i w, lo + (i+1) w)`; the top bin is closed on the
/// right. A constant dimension puts every example in bin 0.
pub fn bin_cells(stage: &Tensor, bins: usize, policy: RangePolicy) -> Result<Vec<Vec<u16>>, InfoError> {
    check(stage, bins, policy)?;
    let (n, d) = (stage.rows(), stage.cols());
    let ranges: Vec<(f64, f64)> = match policy {
        RangePolicy::Fixed { lo, hi } => vec![(lo, hi); d],
        RangePolicy::Observed => (0..d)
            .map(|j| {
                stage
                    .iter_rows()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                        (lo.min(r[j]), hi.max(r[j]))
                    })
            })
            .collect(),
    };
    let top = (bins - 1) as f64;
    let mut out = Vec::with_capacity(n);
    for row in stage.iter_rows() {
        let cell = row
            .iter()
            .zip(&ranges)
            .map(|(&v, &(lo, hi))| {
                if hi <= lo {
                    return 0;
                }
                let t = ((v - lo) / (hi - lo) * bins as f64).floor();
                t.clamp(0.0, top) as u16
            })
            .collect();
        out.push(cell);
    }
    Ok(out)
}

/// Mixed-radix code of each example's cell (first dimension most significant).
pub fn bin_features(stage: &Tensor, bins: usize, policy: RangePolicy) -> Result<Vec<u64>, InfoError> {
    let cells = bin_cells(stage, bins, policy)?;
    cells
        .iter()
        .map(|cell| {
            cell.iter().try_fold(0u64, |code, &i| {
                code.checked_mul(bins as u64)
                    .and_then(|c| c.checked_add(u64::from(i)))
                    .ok_or_else(|| InfoError::Binning(format!("{bins}^{} cells overflow a 64-bit code", cell.len())))
            })
        })
        .collect()
}
