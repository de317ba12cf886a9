//! Monte Carlo estimates of the expected generalization gap and of
//! replace-one stability.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::world::CompiledWorld;
use super::ExperimentError;
use crate::data::{Dataset, DatasetSpec};
use crate::net::{mean_loss, LossEvaluator, Network};
use crate::optim::{train, NoisySgdConfig, TrainTrace};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub replication: u64,
    pub train_risk: f64,
    pub test_risk: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub replication: u64,
    /// Replaced position `i`.
    pub index: usize,
    /// `l(W, Z'_i)`.
    pub loss_original: f64,
    /// `l(W^i, Z'_i)`.
    pub loss_replaced: f64,
    pub diff: f64,
}

/// Mean and standard error over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate<R> {
    pub mean: f64,
    /// `sample std / sqrt(replications)`; `None` for a single replication.
    pub std_error: Option<f64>,
    pub replications: u64,
    pub records: Vec<R>,
}

pub type GapEstimate = Estimate<GapRecord>;
pub type StabilityEstimate = Estimate<StabilityRecord>;

impl<R> Estimate<R> {
    fn from_records(records: Vec<R>, value: impl Fn(&R) -> f64) -> Self {
        // Welford over the records in replication order
        let (mut mean, mut m2) = (0.0, 0.0);
        for (i, r) in records.iter().enumerate() {
            let v = value(r);
            let delta = v - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (v - mean);
        }
        let n = records.len() as u64;
        let std_error = (n > 1).then(|| (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt());
        Self {
            mean,
            std_error,
            replications: n,
            records,
        }
    }
}

impl GapEstimate {
    /// One row per replication and a trailing `summary` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replication", "train_risk", "test_risk", "gap", "std_error"])?;
        for r in &self.records {
            w.write_record([
                r.replication.to_string(),
                r.train_risk.to_string(),
                r.test_risk.to_string(),
                r.gap.to_string(),
                String::new(),
            ])?;
        }
        w.write_record([
            "summary".into(),
            String::new(),
            String::new(),
            self.mean.to_string(),
            self.std_error.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

impl StabilityEstimate {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "replication",
            "index",
            "loss_original",
            "loss_replaced",
            "diff",
            "std_error",
        ])?;
        for r in &self.records {
            w.write_record([
                r.replication.to_string(),
                r.index.to_string(),
                r.loss_original.to_string(),
                r.loss_replaced.to_string(),
                r.diff.to_string(),
                String::new(),
            ])?;
        }
        w.write_record([
            "summary".into(),
            String::new(),
            String::new(),
            String::new(),
            self.mean.to_string(),
            self.std_error.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// A randomized learning setup whose replications are pure functions of
/// the replication index.
pub trait Experiment: Sync {
    fn gap_replication(&self, rep: u64) -> Result<GapRecord, ExperimentError>;
    fn stability_replication(&self, rep: u64) -> Result<StabilityRecord, ExperimentError>;
}

fn run<R: Send>(
    replications: u64,
    f: impl Fn(u64) -> Result<R, ExperimentError> + Sync + Send,
) -> Result<Vec<R>, ExperimentError> {
    if replications == 0 {
        return Err(ExperimentError::InvalidConfig("replications must be at least 1".into()));
    }
    (0..replications).into_par_iter().map(f).collect()
}

/// Mean of `R(W) - R_S(W)` over independent replications.
pub fn measure_gap<E: Experiment + ?Sized>(exp: &E, replications: u64) -> Result<GapEstimate, ExperimentError> {
    let records = run(replications, |r| exp.gap_replication(r))?;
    Ok(Estimate::from_records(records, |r| r.gap))
}

/// Mean of `l(W, Z'_i) - l(W^i, Z'_i)` over independent replications.
pub fn replace_one_stability<E: Experiment + ?Sized>(
    exp: &E,
    replications: u64,
) -> Result<StabilityEstimate, ExperimentError> {
    let records = run(replications, |r| exp.stability_replication(r))?;
    Ok(Estimate::from_records(records, |r| r.diff))
}

/// Noisy-SGD training of a fixed initial network on synthetic data.
#[derive(Debug, Clone, PartialEq)]
pub struct NetExperiment {
    pub template: Network,
    pub data: DatasetSpec,
    pub train: NoisySgdConfig,
    /// Loss used for the gradient.
    pub train_loss: LossEvaluator,
    /// Loss in which risks are reported.
    pub eval_loss: LossEvaluator,
    pub test_size: usize,
    pub seed: u64,
}

impl NetExperiment {
    fn data_for(&self, rep: u64) -> DatasetSpec {
        let mut spec = self.data.clone();
        spec.seed = rng::derive(self.seed, &[tag::DATA, rep]);
        spec
    }

    fn config_for(&self, rep: u64) -> NoisySgdConfig {
        let mut cfg = self.train.clone();
        cfg.seed = rng::derive(self.seed, &[tag::TRAIN, rep]);
        cfg
    }

    /// Trains on replication `rep`'s sample.
    pub fn train_replication(&self, rep: u64) -> Result<(Network, Dataset, TrainTrace), ExperimentError> {
        let data = self.data_for(rep).generate()?;
        let (net, trace) = train(&self.template, &data, &self.config_for(rep), &self.train_loss)?;
        Ok((net, data, trace))
    }
}

impl Experiment for NetExperiment {
    fn gap_replication(&self, rep: u64) -> Result<GapRecord, ExperimentError> {
        let spec = self.data_for(rep);
        let (net, data, _) = self.train_replication(rep)?;
        let test = spec.generate_test(self.test_size)?;
        let train_risk = mean_loss(&net, &data.features, &data.labels, &self.eval_loss)?;
        let test_risk = mean_loss(&net, &test.features, &test.labels, &self.eval_loss)?;
        Ok(GapRecord {
            replication: rep,
            train_risk,
            test_risk,
            gap: test_risk - train_risk,
        })
    }

    fn stability_replication(&self, rep: u64) -> Result<StabilityRecord, ExperimentError> {
        let spec = self.data_for(rep);
        let data = spec.generate()?;
        let mut pick = rng::stream(self.seed, &[tag::REPLICATION, rep]);
        let index = pick.random_range(0..data.len());
        let (x, y) = spec.draw_one(&mut pick)?;
        let swapped = data.replace_row(index, &x, y)?;
        // same batch and noise streams for both runs
        let cfg = self.config_for(rep);
        let (w, _) = train(&self.template, &data, &cfg, &self.train_loss)?;
        let (wi, _) = train(&self.template, &swapped, &cfg, &self.train_loss)?;
        let probe = crate::tensor::Tensor::new(vec![1, x.len()], x)?;
        let loss_original = mean_loss(&w, &probe, &[y], &self.eval_loss)?;
        let loss_replaced = mean_loss(&wi, &probe, &[y], &self.eval_loss)?;
        Ok(StabilityRecord {
            replication: rep,
            index,
            loss_original,
            loss_replaced,
            diff: loss_original - loss_replaced,
        })
    }
}

/// Sampling from a tiny world with its algorithm kernel as the trainer; the
/// population risk is exact.
#[derive(Debug, Clone)]
pub struct WorldExperiment {
    pub world: CompiledWorld,
    pub seed: u64,
}

impl WorldExperiment {
    fn draw_sample<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        (0..self.world.n)
            .map(|_| self.world.point_from_uniform(rng.random::<f64>()))
            .collect()
    }
}

impl Experiment for WorldExperiment {
    fn gap_replication(&self, rep: u64) -> Result<GapRecord, ExperimentError> {
        let w = &self.world;
        let mut rng = rng::stream(self.seed, &[tag::REPLICATION, rep]);
        let digits = self.draw_sample(&mut rng);
        let h = w.hypothesis_from_uniform(w.encode(&digits), rng.random::<f64>());
        let train_risk = w.empirical_risk(h, &digits);
        let test_risk = w.risk(h);
        Ok(GapRecord {
            replication: rep,
            train_risk,
            test_risk,
            gap: test_risk - train_risk,
        })
    }

    fn stability_replication(&self, rep: u64) -> Result<StabilityRecord, ExperimentError> {
        let w = &self.world;
        let mut rng = rng::stream(self.seed, &[tag::REPLICATION, rep]);
        let digits = self.draw_sample(&mut rng);
        let index = rng.random_range(0..w.n);
        let z = w.point_from_uniform(rng.random::<f64>());
        let mut swapped = digits.clone();
        swapped[index] = z;
        // one uniform drives both hypothesis draws
        let u = rng.random::<f64>();
        let h = w.hypothesis_from_uniform(w.encode(&digits), u);
        let hi = w.hypothesis_from_uniform(w.encode(&swapped), u);
        let (loss_original, loss_replaced) = (w.loss[h][z], w.loss[hi][z]);
        Ok(StabilityRecord {
            replication: rep,
            index,
            loss_original,
            loss_replaced,
            diff: loss_original - loss_replaced,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Generator;
    use crate::experiments::world::{AlgorithmSpec, HypothesisSpace, TinyWorld, WorldPoint};
    use crate::net::{Activation, ArchSpec};
    use crate::optim::Schedule;

    fn net_experiment(iterations: u64) -> NetExperiment {
        NetExperiment {
            template: ArchSpec::halving(4, 1, Activation::Tanh, 2).build(1).unwrap(),
            data: DatasetSpec::new(Generator::GaussianBlobs, 10, 4, 2, 1.0, 0),
            train: NoisySgdConfig::new(5, iterations, Schedule::Constant { lr: 0.2, noise: 0.05 }, 0),
            train_loss: LossEvaluator::clipped_cross_entropy(),
            eval_loss: LossEvaluator::zero_one(),
            test_size: 50,
            seed: 4,
        }
    }

    #[test]
    fn single_replication_has_no_std_error() {
        let e = measure_gap(&net_experiment(3), 1).unwrap();
        assert_eq!(e.replications, 1);
        assert!(e.std_error.is_none());
        assert_eq!(e.mean, e.records[0].gap);
        assert!(measure_gap(&net_experiment(3), 0).is_err());
    }

    #[test]
    fn std_error_formula() {
        let e = Estimate::from_records(vec![1.0, 2.0, 4.0], |v| *v);
        let mean = 7.0 / 3.0;
        let var = ((1.0 - mean) * (1.0f64 - mean) + (2.0 - mean) * (2.0 - mean) + (4.0 - mean) * (4.0 - mean)) / 2.0;
        assert!((e.mean - mean).abs() < 1e-15);
        assert!((e.std_error.unwrap() - (var / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn frozen_network_has_zero_stability() {
        let e = replace_one_stability(&net_experiment(0), 50).unwrap();
        assert!(e.records.iter().all(|r| r.diff == 0.0));
    }

    #[test]
    fn results_independent_of_thread_count() {
        let exp = net_experiment(5);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| measure_gap(&exp, 12).unwrap());
        let b = four.install(|| measure_gap(&exp, 12).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn world_monte_carlo_tracks_exact() {
        let world = TinyWorld {
            name: None,
            points: vec![
                WorldPoint {
                    x: vec![0.0],
                    y: 0,
                    p: 0.6,
                },
                WorldPoint {
                    x: vec![1.0],
                    y: 1,
                    p: 0.4,
                },
            ],
            n: 2,
            loss_range: [0.0, 1.0],
            hypotheses: HypothesisSpace::Table {
                loss: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            },
            algorithm: AlgorithmSpec::Erm,
        };
        let exp = WorldExperiment {
            world: world.compile().unwrap(),
            seed: 1,
        };
        let g = measure_gap(&exp, 4000).unwrap();
        let b = replace_one_stability(&exp, 4000).unwrap();
        assert!((g.mean - 0.192).abs() < 3.0 * g.std_error.unwrap());
        assert!((b.mean - 0.192).abs() < 3.0 * b.std_error.unwrap());
    }

    #[test]
    fn csv_has_summary_row() {
        let e = measure_gap(&net_experiment(2), 2).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("replication,train_risk,test_risk,gap,std_error\n0,"));
        assert!(s.lines().last().unwrap().starts_with("summary,"));
    }
}
