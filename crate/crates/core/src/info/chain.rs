//! Layer-wise information chain `I(T_k; h)` and its contraction factors.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::binning::{bin_cells, RangePolicy};
use super::entropy::{plugin_mi, JointCounts};
use super::InfoError;
use crate::data::Dataset;
use crate::net::Network;
use crate::tensor::Tensor;

/// Denominators at or below this are treated as zero information.
pub const ETA_FLOOR: f64 = 1e-9;

/// How the head random variable was realized when estimating the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Realization {
    /// Binned logits of a single network on the probe set.
    Binned,
    /// Mean of binned chains over independently trained replicas.
    BinnedReplicas { replicas: usize },
    /// Exact enumeration over a tiny world.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoChain {
    /// `mi_per_layer[k]` estimates `I(T_k; h)`, `k = 0..=L`.
    pub mi_per_layer: Vec<f64>,
    /// `mi[k] / mi[k-1]`, or `None` when the denominator is below the floor.
    pub eta_per_layer: Vec<Option<f64>>,
    /// Geometric mean of the defined factors.
    pub eta_geo_mean: Option<f64>,
    pub realization: Realization,
}

impl InfoChain {
    pub fn from_mi(mi_per_layer: Vec<f64>, realization: Realization) -> Result<Self, InfoError> {
        if mi_per_layer.is_empty() {
            return Err(InfoError::InvalidChain("chain needs at least I(T_0; h)".into()));
        }
        if let Some(v) = mi_per_layer.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(InfoError::InvalidChain(format!(
                "mutual information {v} is not a finite non-negative value"
            )));
        }
        let eta_per_layer: Vec<Option<f64>> = mi_per_layer
            .windows(2)
            .map(|w| (w[0] > ETA_FLOOR).then(|| w[1] / w[0]))
            .collect();
        let defined: Vec<f64> = eta_per_layer.iter().flatten().copied().collect();
        let eta_geo_mean = (!defined.is_empty()).then(|| {
            if defined.contains(&0.0) {
                0.0
            } else {
                (defined.iter().map(|e| e.ln()).sum::<f64>() / defined.len() as f64).exp()
            }
        });
        Ok(Self {
            mi_per_layer,
            eta_per_layer,
            eta_geo_mean,
            realization,
        })
    }

    pub fn depth(&self) -> usize {
        self.mi_per_layer.len() - 1
    }

    pub fn last_mi(&self) -> f64 {
        *self.mi_per_layer.last().expect("non-empty chain")
    }

    /// CSV with header `k,mi_nats,eta_k`; `eta_k` is blank for `k = 0` and
    /// for undefined ratios.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), InfoError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "mi_nats", "eta_k"])?;
        for (k, mi) in self.mi_per_layer.iter().enumerate() {
            let eta = match k.checked_sub(1).and_then(|j| self.eta_per_layer[j]) {
                Some(e) => e.to_string(),
                None => String::new(),
            };
            w.write_record([k.to_string(), mi.to_string(), eta])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self, tolerance: f64) -> ChainSummary {
        ChainSummary {
            eta_geo_mean: self.eta_geo_mean,
            violations: dpi_check(self, tolerance),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpiViolation {
    pub k: usize,
    pub mi_prev: f64,
    pub mi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub eta_geo_mean: Option<f64>,
    pub violations: Vec<DpiViolation>,
}

/// Every `k` with `mi[k] > mi[k-1] + tolerance`.
pub fn dpi_check(chain: &InfoChain, tolerance: f64) -> Vec<DpiViolation> {
    chain
        .mi_per_layer
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] + tolerance)
        .map(|(i, w)| DpiViolation {
            k: i + 1,
            mi_prev: w[0],
            mi: w[1],
        })
        .collect()
}

fn stage_mi(stages: &[Tensor], logits: &Tensor, bins: usize) -> Result<Vec<f64>, InfoError> {
    let proxy = bin_cells(logits, bins, RangePolicy::Observed)?;
    stages
        .iter()
        .map(|t| {
            let cells = bin_cells(t, bins, RangePolicy::Observed)?;
            Ok(plugin_mi(&JointCounts::from_pairs(&cells, &proxy)?))
        })
        .collect()
}

/// `I(binned T_k; binned logits)` for `k = 0..=L` over the probe set.
pub fn layer_mi_chain(net: &Network, data: &Dataset, bins: usize) -> Result<InfoChain, InfoError> {
    if data.is_empty() {
        return Err(InfoError::EmptyInput);
    }
    let chain = net.forward(&data.features)?;
    InfoChain::from_mi(stage_mi(&chain.stages, &chain.logits, bins)?, Realization::Binned)
}

/// Per-layer mean of the single-network chains of several networks of
/// identical architecture on the same probe set.
///
/// Samples are not pooled across networks: the logits depend on which
/// network produced them, so pooled stages would not form a Markov chain.
pub fn layer_mi_chain_replicated(nets: &[Network], data: &Dataset, bins: usize) -> Result<InfoChain, InfoError> {
    if data.is_empty() || nets.is_empty() {
        return Err(InfoError::EmptyInput);
    }
    let depth = nets[0].depth();
    if nets.iter().any(|n| n.depth() != depth) {
        return Err(InfoError::InvalidChain("replicas differ in depth".into()));
    }
    let mut total = vec![0.0; depth + 1];
    for net in nets {
        let chain = net.forward(&data.features)?;
        for (t, mi) in total.iter_mut().zip(stage_mi(&chain.stages, &chain.logits, bins)?) {
            *t += mi;
        }
    }
    let mean = total.iter().map(|t| t / nets.len() as f64).collect();
    InfoChain::from_mi(mean, Realization::BinnedReplicas { replicas: nets.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DatasetSpec, Generator};
    use crate::net::{Activation, ArchSpec, Layer};

    fn chain(v: &[f64]) -> InfoChain {
        InfoChain::from_mi(v.to_vec(), Realization::Exact).unwrap()
    }

    #[test]
    fn dpi_examples() {
        assert!(dpi_check(&chain(&[1.0, 0.7, 0.3]), 0.0).is_empty());
        let v = dpi_check(&chain(&[0.5, 0.6]), 0.05);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].k, 1);
        assert!(dpi_check(&chain(&[0.5, 0.52]), 0.05).is_empty());
    }

    #[test]
    fn eta_extraction() {
        let c = chain(&[1.0, 0.5, 0.125]);
        assert_eq!(c.eta_per_layer, vec![Some(0.5), Some(0.25)]);
        assert!((c.eta_geo_mean.unwrap() - 0.125f64.sqrt()).abs() < 1e-15);
        let z = chain(&[1.0, 0.0, 0.0]);
        assert_eq!(z.eta_per_layer, vec![Some(0.0), None]);
        assert_eq!(z.eta_geo_mean, Some(0.0));
        let single = chain(&[0.4]);
        assert!(single.eta_per_layer.is_empty() && single.eta_geo_mean.is_none());
        assert!(InfoChain::from_mi(vec![0.1, -0.2], Realization::Exact).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        chain(&[1.0, 0.5]).write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,mi_nats,eta_k\n0,1,\n1,0.5,0.5\n");
    }

    fn probe() -> Dataset {
        DatasetSpec::new(Generator::GaussianBlobs, 200, 4, 3, 0.5, 2)
            .generate()
            .unwrap()
    }

    #[test]
    fn depth_zero_has_no_factors() {
        let net = ArchSpec::halving(4, 0, Activation::Tanh, 3).build(1).unwrap();
        let c = layer_mi_chain(&net, &probe(), 8).unwrap();
        assert_eq!(c.mi_per_layer.len(), 1);
        assert!(c.eta_per_layer.is_empty());
    }

    #[test]
    fn identity_stack_chain_is_constant() {
        let net = ArchSpec::identity_stack(4, 3, 3).build(5).unwrap();
        let c = layer_mi_chain(&net, &probe(), 8).unwrap();
        assert!(c.mi_per_layer.windows(2).all(|w| w[0] == w[1]));
        assert!(c.eta_per_layer.iter().all(|e| *e == Some(1.0)));
    }

    #[test]
    fn constant_layer_zeroes_the_tail() {
        let zero = Layer::dense(Tensor::zeros(&[2, 4]), Activation::Identity).unwrap();
        let next = Layer::dense_from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]], Activation::Tanh).unwrap();
        let head = Layer::dense_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], Activation::Identity).unwrap();
        let net = Network::new(vec![zero, next], head).unwrap();
        let c = layer_mi_chain(&net, &probe(), 8).unwrap();
        assert_eq!(&c.mi_per_layer[1..], &[0.0, 0.0]);
    }

    #[test]
    fn replicated_chain_of_one_matches_single() {
        let net = ArchSpec::halving(4, 2, Activation::Tanh, 3).build(3).unwrap();
        let single = layer_mi_chain(&net, &probe(), 6).unwrap();
        let rep = layer_mi_chain_replicated(std::slice::from_ref(&net), &probe(), 6).unwrap();
        assert_eq!(single.mi_per_layer, rep.mi_per_layer);
        assert_eq!(rep.realization, Realization::BinnedReplicas { replicas: 1 });
    }
}
