//! Plain and noisy mini-batch SGD with an information-budget accountant.
//!
//! The noisy update for the head is
//!
//! ```text
//! h_t = h_{t-1} - alpha_t * mean_grad_h + n_t,     n_t ~ N(0, sigma_t^2 I_d)
//! ```
//!
//! and analogously for each hidden layer with its own rate and noise scale.
//! Each step adds at most `(d/2) ln(1 + alpha_t^2 M^2 / (d sigma_t^2))` nats of
//! information about the sample to the head, where `M^2` bounds the squared
//! norm of the mean head gradient; the looser per-step cap is
//! `alpha_t^2 M^2 / (2 sigma_t^2)`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::net::{backward, Gradients, LossEvaluator, NetError, Network};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("schedules are defined for t >= 1, got t = 0")]
    ZeroStep,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error("dataset has {n} examples, fewer than batch size {batch}")]
    DatasetTooSmall { n: usize, batch: usize },
    #[error("{0} per-layer schedules given for a network with {1} hidden layers")]
    ScheduleCount(usize, usize),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("trace CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Learning-rate / noise-scale schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant {
        lr: f64,
        noise: f64,
    },
    /// `alpha_t = C / t^2`, `sigma_t = sqrt(C / t^2)`.
    InverseSquare {
        c: f64,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<(), OptimError> {
        let ok = match *self {
            Schedule::Constant { lr, noise } => lr > 0.0 && noise > 0.0 && lr.is_finite() && noise.is_finite(),
            Schedule::InverseSquare { c } => c > 0.0 && c.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(OptimError::InvalidSchedule(format!(
                "{self:?}: rates and noise scales must be positive and finite"
            )))
        }
    }
}

/// `(alpha_t, sigma_t)` for iteration `t >= 1`.
pub fn schedule_at(schedule: &Schedule, t: u64) -> Result<(f64, f64), OptimError> {
    if t == 0 {
        return Err(OptimError::ZeroStep);
    }
    schedule.validate()?;
    Ok(match *schedule {
        Schedule::Constant { lr, noise } => (lr, noise),
        Schedule::InverseSquare { c } => {
            let t = t as f64;
            (c / (t * t), c.sqrt() / t)
        }
    })
}

/// Step size and noise scale applied to one weight tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rate {
    pub lr: f64,
    pub noise: f64,
}

impl Rate {
    pub fn new(lr: f64, noise: f64) -> Self {
        Self { lr, noise }
    }

    fn validate(&self) -> Result<(), OptimError> {
        if self.lr >= 0.0 && self.noise >= 0.0 && self.lr.is_finite() && self.noise.is_finite() {
            Ok(())
        } else {
            Err(OptimError::InvalidRate(format!("{self:?}")))
        }
    }
}

/// Rates for every hidden layer and the head at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRates {
    pub layers: Vec<Rate>,
    pub head: Rate,
}

impl StepRates {
    pub fn uniform(depth: usize, rate: Rate) -> Self {
        Self {
            layers: vec![rate; depth],
            head: rate,
        }
    }

    /// Same learning rates with every noise scale set to zero.
    pub fn without_noise(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|r| Rate::new(r.lr, 0.0)).collect(),
            head: Rate::new(self.head.lr, 0.0),
        }
    }
}

/// Position in the counter-based noise stream: `(seed, step)` fully
/// determines every Gaussian draw of that step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    pub seed: u64,
    pub step: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, step: 1 }
    }

    pub fn advance(self) -> Self {
        Self {
            step: self.step + 1,
            ..self
        }
    }
}

/// `w <- w - lr * g` for every trainable weight.
pub fn sgd_step(net: &Network, grads: &Gradients, lr: f64) -> Result<Network, OptimError> {
    Rate::new(lr, 0.0).validate()?;
    Ok(net.map_weights(grads, |_, w, g| {
        let data = w.data().iter().zip(g.data()).map(|(w, g)| w - lr * g).collect();
        Ok(Tensor::new(w.shape().to_vec(), data)?)
    })?)
}

/// One noisy update; layer `k` draws its noise from stream `(seed, step, k)`
/// and the head from `(seed, step, L)`.
pub fn noisy_sgd_step(
    net: &Network,
    grads: &Gradients,
    rates: &StepRates,
    stream: NoiseStream,
) -> Result<(Network, NoiseStream), OptimError> {
    if rates.layers.len() != net.depth() {
        return Err(OptimError::ScheduleCount(rates.layers.len(), net.depth()));
    }
    rates.head.validate()?;
    for r in &rates.layers {
        r.validate()?;
    }
    let depth = net.depth();
    let next = net.map_weights(grads, |k, w, g| {
        let rate = if k == depth { rates.head } else { rates.layers[k] };
        let mut data: Vec<f64> = w.data().iter().zip(g.data()).map(|(w, g)| w - rate.lr * g).collect();
        if rate.noise > 0.0 {
            let mut rng = rng::stream(stream.seed, &[tag::NOISE, stream.step, k as u64]);
            for v in &mut data {
                *v += rate.noise * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(Tensor::new(w.shape().to_vec(), data)?)
    })?;
    Ok((next, stream.advance()))
}

/// Information added to the head by one noisy step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetIncrement {
    /// `(d/2) ln(1 + alpha^2 M^2 / (d sigma^2))`.
    pub nats: f64,
    /// `alpha^2 M^2 / (2 sigma^2)`.
    pub cap: f64,
}

/// Per-iteration MI budget. `grad_sq_bound` is `M^2`, a bound on the squared
/// norm of the mean head gradient; `head_dim` is the number of head weights.
pub fn mi_budget_increment(
    alpha: f64,
    sigma: f64,
    head_dim: usize,
    grad_sq_bound: f64,
) -> Result<BudgetIncrement, OptimError> {
    if sigma.is_nan() || sigma <= 0.0 || alpha < 0.0 || grad_sq_bound < 0.0 || head_dim == 0 {
        return Err(OptimError::InvalidRate(format!(
            "budget needs sigma > 0, alpha >= 0, M^2 >= 0, d >= 1 (got {alpha}, {sigma}, {grad_sq_bound}, {head_dim})"
        )));
    }
    let snr = alpha * alpha * grad_sq_bound / (sigma * sigma);
    let d = head_dim as f64;
    Ok(BudgetIncrement {
        nats: 0.5 * d * (snr / d).ln_1p(),
        cap: 0.5 * snr,
    })
}

fn default_true() -> bool {
    true
}

/// Noisy mini-batch SGD configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisySgdConfig {
    pub batch_size: usize,
    pub iterations: u64,
    pub head_schedule: Schedule,
    /// One schedule per hidden layer; defaults to the head schedule.
    #[serde(default)]
    pub layer_schedules: Option<Vec<Schedule>>,
    /// Disables Gaussian noise injection (the noise-free SGD limit).
    #[serde(default = "default_true")]
    pub noise: bool,
    /// When false, hidden layers keep their initial weights.
    #[serde(default = "default_true")]
    pub train_hidden: bool,
    #[serde(default)]
    pub seed: u64,
    /// User-supplied bound `M` on the mean head-gradient norm.
    #[serde(default)]
    pub grad_moment: Option<f64>,
}

impl NoisySgdConfig {
    pub fn new(batch_size: usize, iterations: u64, head_schedule: Schedule, seed: u64) -> Self {
        Self {
            batch_size,
            iterations,
            head_schedule,
            layer_schedules: None,
            noise: true,
            train_hidden: true,
            seed,
            grad_moment: None,
        }
    }

    fn rates_at(&self, depth: usize, t: u64) -> Result<(StepRates, (f64, f64)), OptimError> {
        let (alpha, sigma) = schedule_at(&self.head_schedule, t)?;
        let layers = match (&self.layer_schedules, self.train_hidden) {
            (_, false) => vec![Rate::new(0.0, 0.0); depth],
            (None, true) => vec![Rate::new(alpha, sigma); depth],
            (Some(s), true) => {
                if s.len() != depth {
                    return Err(OptimError::ScheduleCount(s.len(), depth));
                }
                s.iter()
                    .map(|s| schedule_at(s, t).map(|(a, n)| Rate::new(a, n)))
                    .collect::<Result<_, _>>()?
            }
        };
        let rates = StepRates {
            layers,
            head: Rate::new(alpha, sigma),
        };
        let rates = if self.noise { rates } else { rates.without_noise() };
        Ok((rates, (alpha, sigma)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t: u64,
    pub alpha: f64,
    pub sigma: f64,
    pub head_grad_sq: f64,
    pub budget_increment: f64,
    pub budget_total: f64,
}

/// Per-iteration training record.
///
/// `grad_sq_max` is the running estimate of `M^2` (largest observed squared
/// norm of the mean head gradient); increments use its value at each step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
    pub head_dim: usize,
    pub grad_sq_max: f64,
    pub grad_sq_mean: f64,
    pub mi_budget_total: f64,
}

impl TrainTrace {
    /// Empirical moment bound `M_hat = sqrt(max ||g||^2)`.
    pub fn moment_estimate(&self) -> f64 {
        self.grad_sq_max.sqrt()
    }

    /// Budget recomputed with a fixed moment bound `M` at every step.
    pub fn budget_with_moment(&self, m: f64) -> Result<f64, OptimError> {
        self.records.iter().try_fold(0.0, |acc, r| {
            Ok(acc + mi_budget_increment(r.alpha, r.sigma, self.head_dim, m * m)?.nats)
        })
    }

    /// The looser `sum alpha_t^2 M^2 / (2 sigma_t^2)` for a fixed `M`.
    pub fn budget_cap_with_moment(&self, m: f64) -> f64 {
        self.records
            .iter()
            .map(|r| r.alpha * r.alpha * m * m / (2.0 * r.sigma * r.sigma))
            .sum()
    }

    /// Prefix sums of `alpha_t^2 / sigma_t^2`.
    pub fn snr_prefix_sums(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r.alpha * r.alpha / (r.sigma * r.sigma);
                Some(*acc)
            })
            .collect()
    }

    /// CSV with header `t,alpha,sigma,head_grad_sq,budget_increment,budget_total`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), OptimError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record([
            "t",
            "alpha",
            "sigma",
            "head_grad_sq",
            "budget_increment",
            "budget_total",
        ])?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `config.iterations` noisy steps with mini-batches drawn uniformly with
/// replacement from `data`.
pub fn train(
    net: &Network,
    data: &Dataset,
    config: &NoisySgdConfig,
    loss: &LossEvaluator,
) -> Result<(Network, TrainTrace), OptimError> {
    let head_dim = net.head().weights().len();
    let mut trace = TrainTrace {
        head_dim,
        ..TrainTrace::default()
    };
    if config.iterations == 0 {
        return Ok((net.clone(), trace));
    }
    config.head_schedule.validate()?;
    let n = data.len();
    if config.batch_size == 0 || n < config.batch_size {
        return Err(OptimError::DatasetTooSmall {
            n,
            batch: config.batch_size,
        });
    }
    let mut current = net.clone();
    let mut stream = NoiseStream::new(config.seed);
    let mut labels = vec![0usize; config.batch_size];
    for t in 1..=config.iterations {
        let mut batch_rng = rng::stream(config.seed, &[tag::BATCH, t]);
        let idx: Vec<usize> = (0..config.batch_size).map(|_| batch_rng.random_range(0..n)).collect();
        for (l, &i) in labels.iter_mut().zip(&idx) {
            *l = data.labels[i];
        }
        let batch = data.features.select_rows(&idx);
        let grads = backward(&current, &batch, &labels, loss)?;
        let head_grad_sq = grads.head.squared_norm();

        let (rates, (alpha, sigma)) = config.rates_at(current.depth(), t)?;
        let (next, s) = noisy_sgd_step(&current, &grads, &rates, stream)?;
        current = next;
        stream = s;

        trace.grad_sq_max = trace.grad_sq_max.max(head_grad_sq);
        trace.grad_sq_mean += (head_grad_sq - trace.grad_sq_mean) / t as f64;
        let inc = mi_budget_increment(alpha, sigma, head_dim, trace.grad_sq_max)?.nats;
        trace.mi_budget_total += inc;
        trace.records.push(TraceRecord {
            t,
            alpha,
            sigma,
            head_grad_sq,
            budget_increment: inc,
            budget_total: trace.mi_budget_total,
        });
    }
    Ok((current, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, ArchSpec, Layer, LossKind};
    use proptest::prelude::*;

    fn tiny_net() -> Network {
        ArchSpec::halving(4, 1, Activation::Tanh, 2).build(3).unwrap()
    }

    #[test]
    fn schedule_examples() {
        let s = Schedule::InverseSquare { c: 0.04 };
        let (a1, s1) = schedule_at(&s, 1).unwrap();
        assert!((a1 - 0.04).abs() < 1e-17 && (s1 - 0.2).abs() < 1e-16);
        let (a2, s2) = schedule_at(&s, 2).unwrap();
        assert!((a2 - 0.01).abs() < 1e-17 && (s2 - 0.1).abs() < 1e-16);
        assert!(matches!(schedule_at(&s, 0), Err(OptimError::ZeroStep)));
        let c = Schedule::Constant { lr: 0.3, noise: 0.05 };
        assert_eq!(schedule_at(&c, 9).unwrap(), (0.3, 0.05));
    }

    proptest! {
        #[test]
        fn inverse_square_ratio_identity(c in 1e-4f64..10.0, t in 1u64..10_000) {
            let (a, s) = schedule_at(&Schedule::InverseSquare { c }, t).unwrap();
            let expected = c / (t as f64 * t as f64);
            prop_assert!((a * a / (s * s) - expected).abs() <= 1e-12 * expected);
        }

        #[test]
        fn increment_below_cap(
            alpha in 0.0f64..5.0, sigma in 1e-3f64..5.0, d in 1usize..64, m2 in 0.0f64..100.0
        ) {
            let inc = mi_budget_increment(alpha, sigma, d, m2).unwrap();
            prop_assert!(inc.nats >= 0.0);
            prop_assert!(inc.nats <= inc.cap * (1.0 + 1e-12));
        }
    }

    #[test]
    fn budget_examples() {
        assert_eq!(mi_budget_increment(0.0, 0.3, 4, 2.0).unwrap().nats, 0.0);
        let inc = mi_budget_increment(0.1, 0.1, 1, 1.0).unwrap();
        assert!((inc.nats - 0.346_573_590_279_972_65).abs() < 1e-15);
        assert!((inc.cap - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_examples() {
        let head = Layer::dense_from_rows(&[vec![2.0, 0.0]], Activation::Identity).unwrap();
        let net = Network::new(vec![], head).unwrap();
        let zero = Gradients::zeros_like(&net);
        assert_eq!(sgd_step(&net, &zero, 0.5).unwrap(), net);

        let g = Gradients {
            layers: vec![],
            head: Tensor::new(vec![1, 2], vec![1.0, 3.0]).unwrap(),
        };
        let stepped = sgd_step(&net, &g, 0.1).unwrap();
        assert_eq!(stepped.head().weights().data()[0], 1.9);
        let unit = sgd_step(&net, &g, 1.0).unwrap();
        assert_eq!(unit.head().weights().data()[1], -3.0);
    }

    #[test]
    fn gradient_shape_mismatch_is_rejected() {
        let net = tiny_net();
        let mut g = Gradients::zeros_like(&net);
        g.head = Tensor::zeros(&[1, 1]);
        assert!(sgd_step(&net, &g, 0.1).is_err());
    }

    #[test]
    fn noiseless_step_matches_sgd() {
        let net = tiny_net();
        let data = crate::data::toy_separable(12, 5);
        let grads = backward(
            &net,
            &data.features,
            &data.labels,
            &LossEvaluator::clipped_cross_entropy(),
        )
        .unwrap();
        let rates = StepRates::uniform(net.depth(), Rate::new(0.2, 0.7)).without_noise();
        let (noisy, _) = noisy_sgd_step(&net, &grads, &rates, NoiseStream::new(1)).unwrap();
        assert_eq!(noisy, sgd_step(&net, &grads, 0.2).unwrap());
    }

    #[test]
    fn pure_noise_increments_have_unit_variance() {
        let head = Layer::dense_from_rows(&[vec![0.0, 0.0]], Activation::Identity).unwrap();
        let net = Network::new(vec![], head).unwrap();
        let zero = Gradients::zeros_like(&net);
        let rates = StepRates::uniform(0, Rate::new(0.1, 1.0));
        let mut stream = NoiseStream::new(42);
        let draws = 100_000;
        let (mut sum, mut sum_sq) = ([0.0f64; 2], [0.0f64; 2]);
        for _ in 0..draws {
            let (next, s) = noisy_sgd_step(&net, &zero, &rates, stream).unwrap();
            stream = s;
            for (j, &v) in next.head().weights().data().iter().enumerate() {
                sum[j] += v;
                sum_sq[j] += v * v;
            }
        }
        let n = draws as f64;
        for j in 0..2 {
            let mean = sum[j] / n;
            let var = (sum_sq[j] - n * mean * mean) / (n - 1.0);
            assert!((var - 1.0).abs() < 0.05, "variance {var}");
            // within 3 standard errors of zero
            assert!(mean.abs() < 3.0 * (var / n).sqrt(), "mean {mean}");
        }
    }

    #[test]
    fn zero_iterations_returns_initial_network() {
        let net = tiny_net();
        let data = crate::data::toy_separable(8, 1);
        let cfg = NoisySgdConfig::new(4, 0, Schedule::Constant { lr: 0.1, noise: 0.1 }, 9);
        let (out, trace) = train(&net, &data, &cfg, &LossEvaluator::clipped_cross_entropy()).unwrap();
        assert_eq!(out, net);
        assert!(trace.records.is_empty());
        assert_eq!(trace.mi_budget_total, 0.0);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let net = tiny_net();
        let data = crate::data::toy_separable(16, 2);
        let cfg = NoisySgdConfig::new(4, 25, Schedule::InverseSquare { c: 0.5 }, 77);
        let loss = LossEvaluator::clipped_cross_entropy();
        let a = train(&net, &data, &cfg, &loss).unwrap();
        let b = train(&net, &data, &cfg, &loss).unwrap();
        assert_eq!(a, b);
        let mut other = cfg.clone();
        other.seed = 78;
        assert_ne!(train(&net, &data, &other, &loss).unwrap().0, a.0);
    }

    #[test]
    fn trace_invariants() {
        let net = tiny_net();
        let data = crate::data::toy_separable(16, 4);
        let cfg = NoisySgdConfig::new(4, 40, Schedule::InverseSquare { c: 0.3 }, 5);
        let (_, trace) = train(&net, &data, &cfg, &LossEvaluator::clipped_cross_entropy()).unwrap();
        let mut total = 0.0;
        for r in &trace.records {
            assert!(r.budget_increment >= 0.0);
            total += r.budget_increment;
            assert_eq!(total, r.budget_total);
        }
        assert_eq!(total, trace.mi_budget_total);
        let cap = 0.3 * std::f64::consts::PI.powi(2) / 6.0;
        assert!(trace.snr_prefix_sums().iter().all(|&s| s <= cap + 1e-12));
        // budget is non-decreasing in T: prefix of a longer run
        let mut longer = cfg.clone();
        longer.iterations = 60;
        let (_, long_trace) = train(&net, &data, &longer, &LossEvaluator::clipped_cross_entropy()).unwrap();
        assert!(long_trace.mi_budget_total >= trace.mi_budget_total);
        assert_eq!(long_trace.records[..40], trace.records[..]);
    }

    #[test]
    fn constant_schedule_budget_cap_arithmetic() {
        // d = 1 head, alpha = sigma, M = 1, T = 4: cap = 4 * 1/2 = 2 nats
        let head = Layer::dense_from_rows(&[vec![0.1]], Activation::Identity).unwrap();
        let net = Network::new(vec![], head).unwrap();
        let data = Dataset::new(Tensor::from_rows(&[vec![1.0], vec![-1.0]]).unwrap(), vec![1, 0], 2).unwrap();
        let cfg = NoisySgdConfig::new(1, 4, Schedule::Constant { lr: 0.05, noise: 0.05 }, 3);
        let loss = LossEvaluator::with_range(LossKind::SquaredError, 0.0, 100.0).unwrap();
        let (_, trace) = train(&net, &data, &cfg, &loss).unwrap();
        assert_eq!(trace.head_dim, 1);
        assert!((trace.budget_cap_with_moment(1.0) - 2.0).abs() < 1e-12);
        let with_m = trace.budget_with_moment(1.0).unwrap();
        assert!(with_m <= 2.0);
        assert!((with_m - 4.0 * 0.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn noiseless_training_reduces_loss_on_separable_data() {
        let net = ArchSpec::halving(4, 1, Activation::Tanh, 2).build(8).unwrap();
        let data = crate::data::toy_separable(32, 6);
        let loss = LossEvaluator::clipped_cross_entropy();
        let mut cfg = NoisySgdConfig::new(8, 4, Schedule::Constant { lr: 0.5, noise: 1.0 }, 2);
        cfg.noise = false;
        let before = crate::net::mean_loss(&net, &data.features, &data.labels, &loss).unwrap();
        let (trained, _) = train(&net, &data, &cfg, &loss).unwrap();
        let after = crate::net::mean_loss(&trained, &data.features, &data.labels, &loss).unwrap();
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        TrainTrace::default().write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,alpha,sigma,head_grad_sq,budget_increment,budget_total\n"
        );
        let data = crate::data::toy_separable(8, 1);
        let cfg = NoisySgdConfig::new(2, 3, Schedule::InverseSquare { c: 0.3 }, 1);
        let (_, trace) = train(&tiny_net(), &data, &cfg, &LossEvaluator::clipped_cross_entropy()).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,0.3,"));
    }
}
