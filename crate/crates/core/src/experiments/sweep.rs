//! Depth sweeps: gap, information chain and bound as functions of `L`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::montecarlo::{measure_gap, NetExperiment};
use super::ExperimentError;
use crate::bounds::{main_bound, subgaussian_sigma, BoundInputs, EtaSource, MiSource, Provenance};
use crate::data::DatasetSpec;
use crate::info::{layer_mi_chain_replicated, InfoChain, DEFAULT_BINS};
use crate::net::{Activation, ArchSpec, LossEvaluator};
use crate::optim::NoisySgdConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StackKind {
    /// Width-halving dense layers: every layer is a contraction.
    #[default]
    Halving,
    /// Square identity layers: the lossless control.
    Identity,
}

fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_train_loss() -> LossEvaluator {
    LossEvaluator::clipped_cross_entropy()
}
fn default_eval_loss() -> LossEvaluator {
    LossEvaluator::zero_one()
}
fn default_test_size() -> usize {
    200
}
fn default_chain_replicas() -> usize {
    5
}
fn default_probe_size() -> usize {
    500
}
fn default_bins() -> usize {
    DEFAULT_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub data: DatasetSpec,
    pub depths: Vec<usize>,
    #[serde(default)]
    pub stack: StackKind,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    pub train: NoisySgdConfig,
    #[serde(default = "default_train_loss")]
    pub train_loss: LossEvaluator,
    #[serde(default = "default_eval_loss")]
    pub eval_loss: LossEvaluator,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    pub replications: u64,
    /// Trained networks whose binned chains are averaged.
    #[serde(default = "default_chain_replicas")]
    pub chain_replicas: usize,
    #[serde(default = "default_probe_size")]
    pub probe_size: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub depth: usize,
    pub mean_gap: f64,
    pub stderr: Option<f64>,
    pub mi_last: f64,
    pub eta_geo: Option<f64>,
    /// Empty when the estimated `eta` lies outside `(0, 1]`.
    pub main_bound: Option<f64>,
    /// Mean optimizer information budget used as `I(S; W)`.
    pub mi_budget: f64,
    pub chain: InfoChain,
}

impl SweepConfig {
    pub fn arch(&self, depth: usize) -> ArchSpec {
        let d = self.data.feature_dim;
        match self.stack {
            StackKind::Halving => ArchSpec::halving(d, depth, self.activation, self.data.num_classes),
            StackKind::Identity => ArchSpec::identity_stack(d, depth, self.data.num_classes),
        }
    }

    pub fn experiment(&self, depth: usize) -> Result<NetExperiment, ExperimentError> {
        Ok(NetExperiment {
            template: self.arch(depth).build(self.seed)?,
            data: self.data.clone(),
            train: self.train.clone(),
            train_loss: self.train_loss,
            eval_loss: self.eval_loss,
            test_size: self.test_size,
            seed: self.seed,
        })
    }
}

/// One row per depth.
pub fn depth_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    if config.depths.is_empty() {
        return Err(ExperimentError::InvalidConfig("depths must be nonempty".into()));
    }
    let (a, b) = config.eval_loss.range();
    let sigma = subgaussian_sigma(a, b)?;
    let probe = config.data.generate_test(config.probe_size)?;
    config
        .depths
        .iter()
        .map(|&depth| {
            let exp = config.experiment(depth)?;
            let gap = measure_gap(&exp, config.replications)?;
            let replicas = config.chain_replicas.clamp(1, config.replications.max(1) as usize);
            let trained = (0..replicas as u64)
                .into_par_iter()
                .map(|r| exp.train_replication(r))
                .collect::<Result<Vec<_>, _>>()?;
            let budget = trained.iter().map(|t| t.2.mi_budget_total).sum::<f64>() / trained.len() as f64;
            let nets: Vec<_> = trained.into_iter().map(|t| t.0).collect();
            let chain = layer_mi_chain_replicated(&nets, &probe, config.bins)?;
            let eta = if depth == 0 { Some(1.0) } else { chain.eta_geo_mean };
            let main = match eta {
                Some(e) if e > 0.0 && e <= 1.0 => {
                    let mut inputs = BoundInputs::main(depth as u32, e, sigma, config.data.n as u64, budget);
                    inputs.provenance = Provenance {
                        eta: EtaSource::ChainGeoMean,
                        mi: MiSource::OptimizerBudget,
                    };
                    Some(main_bound(&inputs)?.value)
                }
                _ => None,
            };
            Ok(SweepRow {
                depth,
                mean_gap: gap.mean,
                stderr: gap.std_error,
                mi_last: chain.last_mi(),
                eta_geo: chain.eta_geo_mean,
                main_bound: main,
                mi_budget: budget,
                chain,
            })
        })
        .collect()
}

/// CSV with header `L,mean_gap,stderr,mi_last,eta_geo,main_bound`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), ExperimentError> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["L", "mean_gap", "stderr", "mi_last", "eta_geo", "main_bound"])?;
    for r in rows {
        w.write_record([
            r.depth.to_string(),
            r.mean_gap.to_string(),
            opt(r.stderr),
            r.mi_last.to_string(),
            opt(r.eta_geo),
            opt(r.main_bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}
