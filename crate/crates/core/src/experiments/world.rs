//! Tiny worlds: finite instance and hypothesis spaces where every
//! expectation and mutual information is computed by exhaustive summation.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::bounds::{main_bound, subgaussian_sigma, BoundInputs};
use crate::info::{InfoChain, Realization};
use crate::net::{Activation, Layer, LossEvaluator, Network};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

pub const DEFAULT_STATE_BUDGET: u64 = 10_000_000;
pub const MAX_SAMPLE_SIZE: usize = 6;
pub const MAX_POINTS: usize = 8;
pub const MAX_HYPOTHESES: usize = 64;

/// Absolute slack allowed for floating-point summation in soundness checks.
pub const SOUNDNESS_TOL: f64 = 1e-12;

/// Exact MI at or below this many nats is summation residue; `eta` is not
/// formed from it.
pub const MI_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: Vec<f64>,
    pub y: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisSpace {
    /// `loss[h][z]` given directly.
    Table { loss: Vec<Vec<f64>> },
    /// Fixed hidden layers shared by every hypothesis; hypotheses are heads.
    Network {
        #[serde(default)]
        layers: Vec<Layer>,
        heads: Vec<Layer>,
        loss: LossEvaluator,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    /// One PMF over hypotheses per sample, samples in lexicographic order of
    /// point indices (first draw most significant).
    Table { rows: Vec<Vec<f64>> },
    /// Empirical risk minimizer; ties go to the lowest index.
    Erm,
    /// `P(h | S) ~ exp(-beta n R_S(h))`.
    Gibbs { beta: f64 },
    /// Always outputs hypothesis `index`.
    Constant { index: usize },
}

fn default_range() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyWorld {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub points: Vec<WorldPoint>,
    pub n: usize,
    /// Declared loss range `[a, b]`; the sub-Gaussian constant is `(b-a)/2`.
    #[serde(default = "default_range")]
    pub loss_range: [f64; 2],
    pub hypotheses: HypothesisSpace,
    pub algorithm: AlgorithmSpec,
}

/// A world with its loss table, stage keys and algorithm rows materialized.
#[derive(Debug, Clone)]
pub struct CompiledWorld {
    pub probs: Vec<f64>,
    /// `loss[h][z]`.
    pub loss: Vec<Vec<f64>>,
    /// `stage_ids[k][z]`: points sharing an id are indistinguishable at
    /// stage `k`. Stage 0 is the point itself.
    pub stage_ids: Vec<Vec<usize>>,
    pub n: usize,
    pub sigma: f64,
    /// Row-major `|Z|^n x |W|` kernel `P(h | S)`.
    rows: Vec<f64>,
    num_samples: usize,
}

/// `loss[h][z]`.
type LossTable = Vec<Vec<f64>>;
/// `ids[k][z]`.
type StageIds = Vec<Vec<usize>>;

fn invalid(m: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidWorld(m.into())
}

impl TinyWorld {
    pub fn from_json(s: &str) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn num_hypotheses(&self) -> usize {
        match &self.hypotheses {
            HypothesisSpace::Table { loss } => loss.len(),
            HypothesisSpace::Network { heads, .. } => heads.len(),
        }
    }

    pub fn depth(&self) -> usize {
        match &self.hypotheses {
            HypothesisSpace::Table { .. } => 0,
            HypothesisSpace::Network { layers, .. } => layers.len(),
        }
    }

    /// `|Z|^n |W|`, saturating.
    pub fn joint_states(&self) -> u64 {
        let z = self.points.len() as u64;
        z.saturating_pow(self.n as u32)
            .saturating_mul(self.num_hypotheses() as u64)
    }

    pub fn compile(&self) -> Result<CompiledWorld, ExperimentError> {
        self.compile_with_budget(DEFAULT_STATE_BUDGET)
    }

    pub fn compile_with_budget(&self, budget: u64) -> Result<CompiledWorld, ExperimentError> {
        let (nz, nh) = (self.points.len(), self.num_hypotheses());
        if nz == 0 || nh == 0 || self.n == 0 {
            return Err(invalid("world needs at least one point, one hypothesis and n >= 1"));
        }
        if self.n > MAX_SAMPLE_SIZE || nz > MAX_POINTS || nh > MAX_HYPOTHESES {
            return Err(invalid(format!(
                "world limits are n <= {MAX_SAMPLE_SIZE}, |Z| <= {MAX_POINTS}, |W| <= {MAX_HYPOTHESES} (got {}, {nz}, {nh})",
                self.n
            )));
        }
        let states = self.joint_states();
        if states > budget {
            return Err(ExperimentError::Budget { states, budget });
        }
        let probs: Vec<f64> = self.points.iter().map(|p| p.p).collect();
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid("point probabilities must be non-negative and sum to 1"));
        }
        let [a, b] = self.loss_range;
        let sigma = subgaussian_sigma(a, b)?;

        let (loss, stage_ids) = match &self.hypotheses {
            HypothesisSpace::Table { loss } => {
                if loss.iter().any(|r| r.len() != nz) {
                    return Err(invalid("loss table needs one column per point"));
                }
                (loss.clone(), vec![(0..nz).collect()])
            }
            HypothesisSpace::Network { layers, heads, loss } => self.network_tables(layers, heads, loss)?,
        };
        if let Some(v) = loss.iter().flatten().find(|v| !(**v >= a && **v <= b)) {
            return Err(invalid(format!("loss value {v} outside declared range [{a}, {b}]")));
        }

        let num_samples = nz.pow(self.n as u32);
        let mut world = CompiledWorld {
            probs,
            loss,
            stage_ids,
            n: self.n,
            sigma,
            rows: Vec::with_capacity(num_samples * nh),
            num_samples,
        };
        world.rows = self.algorithm_rows(&world)?;
        Ok(world)
    }

    fn network_tables(
        &self,
        layers: &[Layer],
        heads: &[Layer],
        loss: &LossEvaluator,
    ) -> Result<(LossTable, StageIds), ExperimentError> {
        let rows: Vec<Vec<f64>> = self.points.iter().map(|p| p.x.clone()).collect();
        let x = Tensor::from_rows(&rows)?;
        let mut stage_ids = Vec::new();
        let mut loss_table = Vec::with_capacity(heads.len());
        for (h, head) in heads.iter().enumerate() {
            let net = Network::new(layers.to_vec(), head.clone())?;
            let chain = net.forward(&x)?;
            if h == 0 {
                stage_ids.push((0..self.points.len()).collect());
                for stage in &chain.stages[1..] {
                    let mut ids: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
                    let col = stage
                        .iter_rows()
                        .zip(&self.points)
                        .map(|(r, p)| {
                            let key = (r.iter().map(|v| v.to_bits()).collect(), p.y);
                            let next = ids.len();
                            *ids.entry(key).or_insert(next)
                        })
                        .collect();
                    stage_ids.push(col);
                }
            }
            let row = chain
                .logits
                .iter_rows()
                .zip(&self.points)
                .map(|(out, p)| loss.evaluate(out, p.y))
                .collect::<Result<Vec<_>, _>>()?;
            loss_table.push(row);
        }
        Ok((loss_table, stage_ids))
    }

    fn algorithm_rows(&self, w: &CompiledWorld) -> Result<Vec<f64>, ExperimentError> {
        let nh = w.loss.len();
        let mut rows = Vec::with_capacity(w.num_samples * nh);
        let mut digits = vec![0usize; w.n];
        for s in 0..w.num_samples {
            w.decode(s, &mut digits);
            match &self.algorithm {
                AlgorithmSpec::Table { rows: table } => {
                    if table.len() != w.num_samples {
                        return Err(invalid(format!(
                            "algorithm table has {} rows, need {}",
                            table.len(),
                            w.num_samples
                        )));
                    }
                    let r = &table[s];
                    if r.len() != nh
                        || r.iter().any(|p| !(p.is_finite() && *p >= 0.0))
                        || (r.iter().sum::<f64>() - 1.0).abs() > 1e-12
                    {
                        return Err(invalid(format!("algorithm row {s} is not a PMF over {nh} hypotheses")));
                    }
                    rows.extend_from_slice(r);
                }
                AlgorithmSpec::Erm => {
                    let risks: Vec<f64> = (0..nh).map(|h| w.empirical_risk(h, &digits)).collect();
                    let best = risks
                        .iter()
                        .enumerate()
                        .fold(0, |b, (h, &r)| if r < risks[b] { h } else { b });
                    rows.extend((0..nh).map(|h| f64::from(u8::from(h == best))));
                }
                AlgorithmSpec::Gibbs { beta } => {
                    if !(beta.is_finite() && *beta >= 0.0) {
                        return Err(invalid("gibbs beta must be finite and >= 0"));
                    }
                    let e: Vec<f64> = (0..nh)
                        .map(|h| -beta * w.n as f64 * w.empirical_risk(h, &digits))
                        .collect();
                    let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let z: Vec<f64> = e.iter().map(|v| (v - max).exp()).collect();
                    let total: f64 = z.iter().sum();
                    rows.extend(z.iter().map(|v| v / total));
                }
                AlgorithmSpec::Constant { index } => {
                    if *index >= nh {
                        return Err(invalid(format!("constant hypothesis {index} out of range")));
                    }
                    rows.extend((0..nh).map(|h| f64::from(u8::from(h == *index))));
                }
            }
        }
        Ok(rows)
    }
}

impl CompiledWorld {
    pub fn num_points(&self) -> usize {
        self.probs.len()
    }

    pub fn num_hypotheses(&self) -> usize {
        self.loss.len()
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn depth(&self) -> usize {
        self.stage_ids.len() - 1
    }

    /// Point indices of sample `s`, first draw most significant.
    pub fn decode(&self, mut s: usize, digits: &mut [usize]) {
        let nz = self.num_points();
        for d in digits.iter_mut().rev() {
            *d = s % nz;
            s /= nz;
        }
    }

    pub fn encode(&self, digits: &[usize]) -> usize {
        digits.iter().fold(0, |acc, &d| acc * self.num_points() + d)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let nh = self.num_hypotheses();
        &self.rows[s * nh..(s + 1) * nh]
    }

    pub fn sample_prob(&self, digits: &[usize]) -> f64 {
        digits.iter().map(|&d| self.probs[d]).product()
    }

    pub fn risk(&self, h: usize) -> f64 {
        self.loss[h].iter().zip(&self.probs).map(|(l, p)| l * p).sum()
    }

    pub fn empirical_risk(&self, h: usize, digits: &[usize]) -> f64 {
        digits.iter().map(|&d| self.loss[h][d]).sum::<f64>() / digits.len() as f64
    }

    /// Draws a point index from `D` by inverse CDF on `u ~ U[0, 1)`.
    pub fn point_from_uniform(&self, u: f64) -> usize {
        categorical(&self.probs, u)
    }

    /// Draws a hypothesis from `P(. | S)` by inverse CDF on `u`.
    pub fn hypothesis_from_uniform(&self, s: usize, u: f64) -> usize {
        categorical(self.row(s), u)
    }
}

fn categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyWorldReport {
    pub mi_s_w: f64,
    pub exact_gap: f64,
    pub exact_beta: f64,
    pub mi_chain: InfoChain,
    /// `(I(T_L; h) / I(S; W))^{1/L}`; `None` for `L = 0` or `I(S;W) = 0`.
    pub eta_exact: Option<f64>,
    /// `min_h R(h)`.
    pub best_risk: f64,
    pub sigma: f64,
    pub n: usize,
}

fn mutual_information(joint: &BTreeMap<Vec<usize>, Vec<f64>>, marginal_h: &[f64]) -> f64 {
    let mut mi = 0.0;
    for row in joint.values() {
        let pk: f64 = row.iter().sum();
        for (h, &p) in row.iter().enumerate() {
            if p > 0.0 {
                mi += p * (p / (pk * marginal_h[h])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Exact `I(S;W)`, gap, replace-one stability and stage-wise chain.
pub fn tiny_world_exact(world: &TinyWorld) -> Result<TinyWorldReport, ExperimentError> {
    exact_from_compiled(&world.compile()?)
}

pub fn exact_from_compiled(w: &CompiledWorld) -> Result<TinyWorldReport, ExperimentError> {
    let (nz, nh, n) = (w.num_points(), w.num_hypotheses(), w.n);
    let risks: Vec<f64> = (0..nh).map(|h| w.risk(h)).collect();
    let mut digits = vec![0usize; n];
    let mut replaced = vec![0usize; n];
    let mut marginal_h = vec![0.0; nh];
    let mut joints: Vec<BTreeMap<Vec<usize>, Vec<f64>>> = vec![BTreeMap::new(); w.stage_ids.len()];
    let (mut gap, mut beta) = (0.0, 0.0);

    for s in 0..w.num_samples() {
        w.decode(s, &mut digits);
        let ps = w.sample_prob(&digits);
        if ps == 0.0 {
            continue;
        }
        let row = w.row(s);
        for h in 0..nh {
            marginal_h[h] += ps * row[h];
            gap += ps * row[h] * (risks[h] - w.empirical_risk(h, &digits));
        }
        for (k, ids) in w.stage_ids.iter().enumerate() {
            let key: Vec<usize> = digits.iter().map(|&d| ids[d]).collect();
            let cell = joints[k].entry(key).or_insert_with(|| vec![0.0; nh]);
            for h in 0..nh {
                cell[h] += ps * row[h];
            }
        }
        for i in 0..n {
            replaced.copy_from_slice(&digits);
            for z in 0..nz {
                if w.probs[z] == 0.0 {
                    continue;
                }
                replaced[i] = z;
                let alt = w.row(w.encode(&replaced));
                let diff: f64 = (0..nh).map(|h| (row[h] - alt[h]) * w.loss[h][z]).sum();
                beta += ps * w.probs[z] * diff / n as f64;
            }
        }
    }

    let mi: Vec<f64> = joints.iter().map(|j| mutual_information(j, &marginal_h)).collect();
    let mi_s_w = mi[0];
    let depth = mi.len() - 1;
    let eta_exact = (depth > 0 && mi_s_w > MI_FLOOR).then(|| (mi[depth] / mi_s_w).powf(1.0 / depth as f64));
    Ok(TinyWorldReport {
        mi_s_w,
        exact_gap: gap,
        exact_beta: beta,
        mi_chain: InfoChain::from_mi(mi, Realization::Exact)?,
        eta_exact,
        best_risk: risks.iter().copied().fold(f64::INFINITY, f64::min),
        sigma: w.sigma,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundnessReport {
    pub abs_gap: f64,
    pub mi_last: f64,
    /// `sqrt(2 sigma^2 / n I(T_L; h))`.
    pub lemma4_bound: f64,
    pub lemma4_slack: f64,
    /// Main bound with exact `I(S;W)` and exact `eta`.
    pub theorem2_bound: f64,
    pub theorem2_slack: f64,
    pub holds: bool,
}

/// Compares the exact gap with both bounds evaluated on exact quantities.
pub fn lemma4_soundness_check(world: &TinyWorld) -> Result<SoundnessReport, ExperimentError> {
    soundness_from_report(&tiny_world_exact(world)?)
}

pub fn soundness_from_report(r: &TinyWorldReport) -> Result<SoundnessReport, ExperimentError> {
    let abs_gap = r.exact_gap.abs();
    let mi_last = r.mi_chain.last_mi();
    let s2 = r.sigma * r.sigma;
    let lemma4_bound = (2.0 * s2 / r.n as f64 * mi_last).sqrt();
    let depth = r.mi_chain.depth() as u32;
    let theorem2_bound = match r.eta_exact {
        Some(0.0) => 0.0,
        // eta undefined (no information at stage 0): eta = 1 is always valid
        eta => {
            let eta = eta.unwrap_or(1.0);
            if eta > 1.0 + SOUNDNESS_TOL {
                return Err(ExperimentError::Soundness(format!(
                    "exact chain increases: eta = {eta} > 1"
                )));
            }
            let inputs = BoundInputs::main(depth, eta.min(1.0), r.sigma, r.n as u64, r.mi_s_w);
            main_bound(&inputs)?.value
        }
    };
    let lemma4_slack = lemma4_bound - abs_gap;
    let theorem2_slack = theorem2_bound - abs_gap;
    Ok(SoundnessReport {
        abs_gap,
        mi_last,
        lemma4_bound,
        lemma4_slack,
        theorem2_bound,
        theorem2_slack,
        holds: lemma4_slack >= -SOUNDNESS_TOL && theorem2_slack >= -SOUNDNESS_TOL,
    })
}

/// Limits for [`random_world`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldShape {
    pub max_n: usize,
    pub max_points: usize,
    pub max_hypotheses: usize,
    pub max_depth: usize,
}

impl Default for WorldShape {
    fn default() -> Self {
        Self {
            max_n: 3,
            max_points: 4,
            max_hypotheses: 16,
            max_depth: 3,
        }
    }
}

fn random_pmf<R: Rng>(rng: &mut R, k: usize, sparse: bool) -> Vec<f64> {
    let mut w: Vec<f64> = (0..k)
        .map(|_| {
            if sparse && rng.random_bool(0.4) {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    if w.iter().all(|v| *v == 0.0) {
        w[rng.random_range(0..k)] = 1.0;
    }
    let total: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|v| v / total).collect();
    // put the rounding residue on the largest entry
    let (imax, _) = p
        .iter()
        .enumerate()
        .fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let rest: f64 = p.iter().enumerate().filter(|(i, _)| *i != imax).map(|(_, v)| v).sum();
    p[imax] = 1.0 - rest;
    p
}

/// A random world drawn from stream `(seed, WORLD)`: half use an explicit
/// loss table, half a small network with shared hidden layers.
pub fn random_world(seed: u64, shape: WorldShape) -> TinyWorld {
    let mut rng = rng::stream(seed, &[tag::WORLD]);
    let n = rng.random_range(1..=shape.max_n);
    let nz = rng.random_range(2..=shape.max_points);
    let nh = rng.random_range(2..=shape.max_hypotheses);
    let probs = random_pmf(&mut rng, nz, false);
    let network = rng.random_bool(0.5);

    let grid = [-1.0, 0.0, 1.0];
    let points: Vec<WorldPoint> = probs
        .iter()
        .map(|&p| WorldPoint {
            x: (0..2).map(|_| grid[rng.random_range(0..3)]).collect(),
            y: rng.random_range(0..2),
            p,
        })
        .collect();

    let hypotheses = if network {
        let depth = rng.random_range(1..=shape.max_depth);
        let mut width = 2;
        let mut layers = Vec::with_capacity(depth);
        for _ in 0..depth {
            let out = rng.random_range(1..=2);
            let mut w: Vec<f64> = (0..out * width)
                .map(|_| grid[rng.random_range(0..3)] * 0.5 + 0.25)
                .collect();
            if rng.random_bool(0.3) {
                // duplicate the first column: rank-deficient map
                for r in 0..out {
                    w[r * width + width - 1] = w[r * width];
                }
            }
            let act = [Activation::Relu, Activation::Tanh, Activation::Identity][rng.random_range(0..3)];
            layers.push(
                Layer::dense(Tensor::new(vec![out, width], w).expect("finite weights"), act).expect("valid layer"),
            );
            width = out;
        }
        let heads = (0..nh)
            .map(|_| {
                let w: Vec<f64> = (0..2 * width).map(|_| rng.random_range(-1.0..1.0)).collect();
                Layer::dense(Tensor::new(vec![2, width], w).expect("finite"), Activation::Identity).expect("valid head")
            })
            .collect();
        HypothesisSpace::Network {
            layers,
            heads,
            loss: LossEvaluator::zero_one(),
        }
    } else {
        let binary = rng.random_bool(0.5);
        let loss = (0..nh)
            .map(|_| {
                (0..nz)
                    .map(|_| {
                        if binary {
                            f64::from(rng.random_range(0..2u8))
                        } else {
                            rng.random_range(0.0..=1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        HypothesisSpace::Table { loss }
    };

    let algorithm = match rng.random_range(0..4) {
        0 => AlgorithmSpec::Erm,
        1 => AlgorithmSpec::Gibbs {
            beta: rng.random_range(0.5..8.0),
        },
        2 => AlgorithmSpec::Constant {
            index: rng.random_range(0..nh),
        },
        _ => AlgorithmSpec::Table {
            rows: (0..nz.pow(n as u32)).map(|_| random_pmf(&mut rng, nh, true)).collect(),
        },
    };
    TinyWorld {
        name: Some(format!("random-{seed}")),
        points,
        n,
        loss_range: [0.0, 1.0],
        hypotheses,
        algorithm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point_erm() -> TinyWorld {
        TinyWorld {
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
        }
    }

    #[test]
    fn constant_algorithm_is_uninformative() {
        let mut w = two_point_erm();
        w.algorithm = AlgorithmSpec::Constant { index: 1 };
        let r = tiny_world_exact(&w).unwrap();
        assert_eq!(r.mi_s_w, 0.0);
        assert!(r.exact_gap.abs() < 1e-15 && r.exact_beta.abs() < 1e-15);
    }

    #[test]
    fn identity_algorithm_has_ln2() {
        let w = TinyWorld {
            name: None,
            points: vec![
                WorldPoint {
                    x: vec![0.0],
                    y: 0,
                    p: 0.5,
                },
                WorldPoint {
                    x: vec![1.0],
                    y: 1,
                    p: 0.5,
                },
            ],
            n: 1,
            loss_range: [0.0, 1.0],
            hypotheses: HypothesisSpace::Table {
                loss: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            },
            algorithm: AlgorithmSpec::Table {
                rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
        };
        let r = tiny_world_exact(&w).unwrap();
        assert!((r.mi_s_w - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn two_point_erm_golden() {
        let r = tiny_world_exact(&two_point_erm()).unwrap();
        assert!((r.exact_gap - 0.192).abs() < 1e-15);
        assert!((r.mi_s_w - 0.439_669_879_401_342_9).abs() < 1e-15);
        assert!((r.exact_beta - r.exact_gap).abs() < 1e-15);
    }

    #[test]
    fn budget_and_limits() {
        let w = two_point_erm();
        assert!(matches!(
            w.compile_with_budget(7),
            Err(ExperimentError::Budget { states: 8, budget: 7 })
        ));
        let mut big = w.clone();
        big.n = 7;
        assert!(big.compile().is_err());
    }

    #[test]
    fn validation() {
        let mut w = two_point_erm();
        w.points[0].p = 0.7;
        assert!(w.compile().is_err());
        let mut w = two_point_erm();
        w.loss_range = [0.0, 0.5];
        assert!(w.compile().is_err());
        let mut w = two_point_erm();
        w.algorithm = AlgorithmSpec::Table {
            rows: vec![vec![1.0, 0.0]; 3],
        };
        assert!(w.compile().is_err());
    }

    #[test]
    fn random_worlds_respect_shape_and_identity() {
        for seed in 0..40 {
            let w = random_world(seed, WorldShape::default());
            assert!(w.n <= 3 && w.points.len() <= 4 && w.num_hypotheses() <= 16);
            let r = tiny_world_exact(&w).unwrap();
            assert!((r.exact_gap - r.exact_beta).abs() < 1e-12, "seed {seed}");
            let c = &r.mi_chain.mi_per_layer;
            assert!(c.windows(2).all(|p| p[1] <= p[0] + 1e-12), "seed {seed}: {c:?}");
            assert!(soundness_from_report(&r).unwrap().holds, "seed {seed}");
        }
    }

    #[test]
    fn world_json_round_trip() {
        let w = random_world(3, WorldShape::default());
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(TinyWorld::from_json(&s).unwrap(), w);
    }
}
