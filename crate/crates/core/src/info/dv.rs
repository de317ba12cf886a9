//! Donsker–Varadhan variational lower bound on KL divergence.
//!
//! For any test function `F`, `D(P || Q) >= E_P[F] - ln E_Q[e^F]`; the
//! estimate is the best value over a finite family.

use super::entropy::DiscretePmf;
use super::InfoError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvEstimate {
    /// Best objective over the family, in nats.
    pub value: f64,
    /// Index of the maximizing test function.
    pub best: usize,
}

/// `ln sum_i w_i e^{v_i}` with weights summing to one, shifted by the max.
fn weighted_log_mean_exp(values: impl Iterator<Item = (f64, f64)> + Clone) -> f64 {
    let max = values
        .clone()
        .filter(|(w, _)| *w > 0.0)
        .fold(f64::NEG_INFINITY, |m, (_, v)| m.max(v));
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = values.filter(|(w, _)| *w > 0.0).map(|(w, v)| w * (v - max).exp()).sum();
    max + s.ln()
}

fn pick_best(objectives: impl Iterator<Item = Result<f64, InfoError>>) -> Result<DvEstimate, InfoError> {
    let mut best: Option<DvEstimate> = None;
    for (i, v) in objectives.enumerate() {
        let value = v?;
        if best.is_none_or(|b| value > b.value) {
            best = Some(DvEstimate { value, best: i });
        }
    }
    best.ok_or(InfoError::EmptyInput)
}

/// Sample-based estimate `max_F [mean_P F - ln mean_Q e^F]`.
pub fn dv_lower_bound<T, F>(samples_p: &[T], samples_q: &[T], family: &[F]) -> Result<DvEstimate, InfoError>
where
    F: Fn(&T) -> f64,
{
    if samples_p.is_empty() || samples_q.is_empty() || family.is_empty() {
        return Err(InfoError::EmptyInput);
    }
    let wq = 1.0 / samples_q.len() as f64;
    pick_best(family.iter().map(|f| {
        let mut mean_p = 0.0;
        for x in samples_p {
            let v = f(x);
            if !v.is_finite() {
                return Err(InfoError::NonFinite("test function value on P samples"));
            }
            mean_p += v;
        }
        mean_p /= samples_p.len() as f64;
        let fq: Vec<f64> = samples_q.iter().map(f).collect();
        if fq.iter().any(|v| !v.is_finite()) {
            return Err(InfoError::NonFinite("test function value on Q samples"));
        }
        Ok(mean_p - weighted_log_mean_exp(fq.iter().map(|&v| (wq, v))))
    }))
}

/// Population version over a finite alphabet: each test function is given
/// as its value on every symbol.
pub fn dv_lower_bound_exact(p: &DiscretePmf, q: &DiscretePmf, family: &[Vec<f64>]) -> Result<DvEstimate, InfoError> {
    if p.len() != q.len() {
        return Err(InfoError::SupportMismatch(p.len(), q.len()));
    }
    if family.is_empty() {
        return Err(InfoError::EmptyInput);
    }
    pick_best(family.iter().map(|f| {
        if f.len() != p.len() {
            return Err(InfoError::SupportMismatch(f.len(), p.len()));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(InfoError::NonFinite("test function value"));
        }
        let mean_p: f64 = p.probs().iter().zip(f).map(|(w, v)| w * v).sum();
        Ok(mean_p - weighted_log_mean_exp(q.probs().iter().copied().zip(f.iter().copied())))
    }))
}
