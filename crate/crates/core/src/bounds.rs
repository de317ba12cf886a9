//! Closed-form generalization, stability and excess-risk bounds.
//!
//! Every bound shares the depth factor `exp(-(L/2) ln(1/eta)) = eta^{L/2}`
//! times a square-root information term; all logarithms are natural, so
//! information arguments are in nats.

use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::optim::{schedule_at, OptimError, Schedule};

#[derive(Debug, Error)]
pub enum BoundError {
    #[error("invalid bound input: {0}")]
    InvalidInput(String),
    #[error("{0} requires `{1}`")]
    Missing(&'static str, &'static str),
    #[error("an infinite horizon is only summable for the inverse_square schedule")]
    InfiniteHorizon,
    #[error(transparent)]
    Schedule(#[from] OptimError),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Main,
    Stability,
    NoisySgd,
    Binary,
    Excess,
    HighProb,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Main => "main",
            BoundKind::Stability => "stability",
            BoundKind::NoisySgd => "noisy_sgd",
            BoundKind::Binary => "binary",
            BoundKind::Excess => "excess",
            BoundKind::HighProb => "high_prob",
        }
    }
}

/// Number of noisy-SGD iterations; `"inf"` in JSON for the infinite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(u64),
    Infinite,
}

impl Serialize for Horizon {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Horizon::Finite(t) => s.serialize_u64(*t),
            Horizon::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Horizon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(t) => Ok(Horizon::Finite(t)),
            Raw::S(s) if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity") => Ok(Horizon::Infinite),
            Raw::S(s) => Err(serde::de::Error::custom(format!(
                "T must be a count or \"inf\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSource {
    #[default]
    User,
    ChainGeoMean,
    TinyWorldExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiSource {
    #[default]
    User,
    TinyWorldExact,
    /// Accumulated noisy-SGD information budget (an upper bound).
    OptimizerBudget,
    /// `H(S)`, the crude cap on `I(S; W)`.
    EntropyCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub eta: EtaSource,
    #[serde(default)]
    pub mi: MiSource,
}

fn one() -> f64 {
    1.0
}

fn is_main(k: &BoundKind) -> bool {
    *k == BoundKind::Main
}

/// Arguments of every calculator. Unused optional fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub kind: BoundKind,
    /// Number of contraction layers `L`.
    #[serde(rename = "L", default)]
    pub depth: u32,
    /// Geometric-mean contraction factor in `(0, 1]`.
    #[serde(default = "one")]
    pub eta: f64,
    /// Sub-Gaussian constant of the loss.
    pub sigma: f64,
    pub n: u64,
    /// `I(S; W)` in nats.
    #[serde(default, alias = "mi", skip_serializing_if = "Option::is_none")]
    pub mi_nats: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub grad_moment: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Schedule>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Horizon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vc_dim: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Underlying bound for `excess` and `high_prob`.
    #[serde(default = "base_default", skip_serializing_if = "is_main")]
    pub base: BoundKind,
    #[serde(default)]
    pub provenance: Provenance,
}

fn base_default() -> BoundKind {
    BoundKind::Main
}

impl BoundInputs {
    /// Inputs for the main bound.
    pub fn main(depth: u32, eta: f64, sigma: f64, n: u64, mi_nats: f64) -> Self {
        Self {
            kind: BoundKind::Main,
            depth,
            eta,
            sigma,
            n,
            mi_nats: Some(mi_nats),
            grad_moment: None,
            schedule: None,
            horizon: None,
            vc_dim: None,
            delta: None,
            base: BoundKind::Main,
            provenance: Provenance::default(),
        }
    }

    pub fn with_kind(mut self, kind: BoundKind) -> Self {
        self.kind = kind;
        self
    }

    fn validate(&self) -> Result<(), BoundError> {
        let bad = |m: String| Err(BoundError::InvalidInput(m));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive and finite, got {}", self.sigma));
        }
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if let Some(mi) = self.mi_nats {
            if !(mi >= 0.0 && mi.is_finite()) {
                return bad(format!("mi_nats must be finite and >= 0, got {mi}"));
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d <= 1.0) {
                return bad(format!("delta must lie in (0, 1], got {d}"));
            }
        }
        Ok(())
    }

    fn mi(&self, kind: &'static str) -> Result<f64, BoundError> {
        self.mi_nats.ok_or(BoundError::Missing(kind, "mi_nats"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Factors {
    /// `exp(-(L/2) ln(1/eta))`.
    pub exp_factor: f64,
    pub sqrt_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// `factors.exp_factor * factors.sqrt_factor`.
    pub value: f64,
    pub factors: Factors,
    pub inputs: BoundInputs,
    pub units: String,
}

impl BoundReport {
    fn new(kind: BoundKind, factors: Factors, inputs: &BoundInputs) -> Self {
        Self {
            kind,
            value: factors.exp_factor * factors.sqrt_factor,
            factors,
            inputs: inputs.clone(),
            units: "nats".into(),
        }
    }
}

/// `exp(-(L/2) ln(1/eta))`.
pub fn depth_factor(depth: u32, eta: f64) -> f64 {
    (-(f64::from(depth) / 2.0) * (1.0 / eta).ln()).exp()
}

/// `eta^{L/2} sqrt(2 sigma^2 I(S;W) / n)`.
pub fn main_bound(inputs: &BoundInputs) -> Result<BoundReport, BoundError> {
    inputs.validate()?;
    let mi = inputs.mi("main bound")?;
    let s2 = inputs.sigma * inputs.sigma;
    let factors = Factors {
        exp_factor: depth_factor(inputs.depth, inputs.eta),
        sqrt_factor: (2.0 * s2 * mi / inputs.n as f64).sqrt(),
    };
    Ok(BoundReport::new(BoundKind::Main, factors, inputs))
}

/// Average replace-one stability rate; numerically the main bound.
pub fn stability_rate(inputs: &BoundInputs) -> Result<BoundReport, BoundError> {
    let mut r = main_bound(inputs)?;
    r.kind = BoundKind::Stability;
    Ok(r)
}

/// `sum_{t=1}^T alpha_t^2 / sigma_t^2`; the infinite inverse-square sum is
/// `C pi^2 / 6`.
pub fn snr_sum(schedule: &Schedule, horizon: Horizon) -> Result<f64, BoundError> {
    schedule.validate()?;
    match (schedule, horizon) {
        (Schedule::InverseSquare { c }, Horizon::Infinite) => Ok(c * std::f64::consts::PI.powi(2) / 6.0),
        (_, Horizon::Infinite) => Err(BoundError::InfiniteHorizon),
        (Schedule::Constant { lr, noise }, Horizon::Finite(t)) => Ok(t as f64 * (lr / noise).powi(2)),
        (Schedule::InverseSquare { c }, Horizon::Finite(t)) => {
            // sum smallest terms first; beyond a million terms use the
            // trigamma tail of the zeta(2) series
            const DIRECT: u64 = 1_000_000;
            let cap = c * std::f64::consts::PI.powi(2) / 6.0;
            let partial = if t <= DIRECT {
                (1..=t).rev().try_fold(0.0, |acc, i| {
                    let (a, s) = schedule_at(schedule, i)?;
                    Ok::<_, BoundError>(acc + a * a / (s * s))
                })?
            } else {
                let x = t as f64 + 1.0;
                let tail = 1.0 / x + 1.0 / (2.0 * x * x) + 1.0 / (6.0 * x.powi(3)) - 1.0 / (30.0 * x.powi(5));
                c * (std::f64::consts::PI.powi(2) / 6.0 - tail)
            };
            Ok(partial.min(cap))
        }
    }
}

/// `eta^{L/2} sqrt((sigma^2 / n) sum_t M^2 alpha_t^2 / sigma_t^2)`.
pub fn noisy_sgd_bound(inputs: &BoundInputs) -> Result<BoundReport, BoundError> {
    inputs.validate()?;
    let m = inputs.grad_moment.ok_or(BoundError::Missing("noisy_sgd bound", "M"))?;
    if !(m > 0.0 && m.is_finite()) {
        return Err(BoundError::InvalidInput(format!(
            "M must be positive and finite, got {m}"
        )));
    }
    let schedule = inputs
        .schedule
        .ok_or(BoundError::Missing("noisy_sgd bound", "schedule"))?;
    let horizon = inputs.horizon.ok_or(BoundError::Missing("noisy_sgd bound", "T"))?;
    let sum = snr_sum(&schedule, horizon)?;
    let s2 = inputs.sigma * inputs.sigma;
    let factors = Factors {
        exp_factor: depth_factor(inputs.depth, inputs.eta),
        sqrt_factor: (s2 / inputs.n as f64 * m * m * sum).sqrt(),
    };
    Ok(BoundReport::new(BoundKind::NoisySgd, factors, inputs))
}

/// Binary classification with VC dimension `d`: `I(S;W)` is replaced by
/// `d` for `n <= d` and by `d ln(e n / d)` otherwise.
pub fn binary_bound(inputs: &BoundInputs) -> Result<BoundReport, BoundError> {
    inputs.validate()?;
    let d = inputs.vc_dim.ok_or(BoundError::Missing("binary bound", "vc_dim"))?;
    if d == 0 {
        return Err(BoundError::InvalidInput("vc_dim must be at least 1".into()));
    }
    let (n, df) = (inputs.n as f64, d as f64);
    let base = 2.0 * inputs.sigma * inputs.sigma * df / n;
    let inner = if inputs.n <= d {
        base
    } else {
        base * (1.0 + (n / df).ln())
    };
    let factors = Factors {
        exp_factor: depth_factor(inputs.depth, inputs.eta),
        sqrt_factor: inner.sqrt(),
    };
    Ok(BoundReport::new(BoundKind::Binary, factors, inputs))
}

/// Bound on `E[R(W)] - R*`: the generalization bound's value, unchanged.
pub fn excess_risk_bound(report: &BoundReport) -> Result<f64, BoundError> {
    match report.kind {
        BoundKind::Main | BoundKind::NoisySgd | BoundKind::Binary => Ok(report.value),
        k => Err(BoundError::InvalidInput(format!(
            "excess risk lifts main, noisy_sgd or binary reports, not {}",
            k.name()
        ))),
    }
}

/// Markov lift: with probability at least `1 - delta` the gap is below
/// `value / delta`.
pub fn high_prob_bound(report: &BoundReport, delta: f64) -> Result<f64, BoundError> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(BoundError::InvalidInput(format!(
            "delta must lie in (0, 1], got {delta}"
        )));
    }
    Ok(report.value / delta)
}

/// `(b - a) / 2` for a loss bounded in `[a, b]`.
pub fn subgaussian_sigma(a: f64, b: f64) -> Result<f64, BoundError> {
    if !a.is_finite() || !b.is_finite() || b <= a {
        return Err(BoundError::InvalidInput(format!("loss range [{a}, {b}] is degenerate")));
    }
    Ok((b - a) / 2.0)
}

/// Dispatches on `inputs.kind`.
pub fn evaluate(inputs: &BoundInputs) -> Result<BoundReport, BoundError> {
    let base_of = |kind: BoundKind| -> Result<BoundReport, BoundError> {
        match kind {
            BoundKind::Main => main_bound(inputs),
            BoundKind::Stability => stability_rate(inputs),
            BoundKind::NoisySgd => noisy_sgd_bound(inputs),
            BoundKind::Binary => binary_bound(inputs),
            k => Err(BoundError::InvalidInput(format!("{} cannot be a base bound", k.name()))),
        }
    };
    match inputs.kind {
        BoundKind::Excess => {
            let base = base_of(inputs.base)?;
            excess_risk_bound(&base)?;
            Ok(BoundReport {
                kind: BoundKind::Excess,
                inputs: inputs.clone(),
                ..base
            })
        }
        BoundKind::HighProb => {
            let delta = inputs.delta.ok_or(BoundError::Missing("high_prob bound", "delta"))?;
            let base = base_of(inputs.base)?;
            high_prob_bound(&base, delta)?;
            let factors = Factors {
                exp_factor: base.factors.exp_factor,
                sqrt_factor: base.factors.sqrt_factor / delta,
            };
            Ok(BoundReport::new(BoundKind::HighProb, factors, inputs))
        }
        k => base_of(k),
    }
}

/// Batch CSV with header `kind,L,eta,sigma,n,mi,value`.
pub fn write_batch_csv<W: Write>(reports: &[BoundReport], out: W) -> Result<(), BoundError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "L", "eta", "sigma", "n", "mi", "value"])?;
    for r in reports {
        let i = &r.inputs;
        w.write_record([
            r.kind.name().to_string(),
            i.depth.to_string(),
            i.eta.to_string(),
            i.sigma.to_string(),
            i.n.to_string(),
            i.mi_nats.map(|m| m.to_string()).unwrap_or_default(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
