//! Subcommand bodies. Each takes the resolved config document and returns
//! the canonical snapshot that reproduces its outputs.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{
    require_seed, snapshot, typed, BoundsConfig, BoundsInput, ChainConfig, CheckConfig, GapConfig, TinyWorldConfig,
    TrainConfig,
};
use super::corpus::shipped_worlds;
use super::manifest::OutputDir;
use super::plot::{emit_plot_data, ChainRow, CheckRow};
use super::CliError;
use crate::bounds::{evaluate, write_batch_csv};
use crate::experiments::{
    depth_sweep, exact_from_compiled, measure_gap, random_world, replace_one_stability, soundness_from_report,
    Experiment, NetExperiment, SweepConfig, TinyWorld, WorldExperiment, DEFAULT_STATE_BUDGET,
};
use crate::info::layer_mi_chain_replicated;
use crate::net::mean_loss;
use crate::rng::{self, tag};

pub(crate) struct Outcome {
    pub snapshot: Value,
    pub seed: Option<u64>,
    /// Printed to stdout.
    pub summary: String,
    /// Set when a soundness check failed; outputs are still written.
    pub violation: Option<String>,
}

fn pretty<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))
}

fn done<C: Serialize, S: Serialize>(cfg: &C, seed: Option<u64>, summary: &S) -> Result<Outcome, CliError> {
    Ok(Outcome {
        snapshot: snapshot(cfg)?,
        seed,
        summary: pretty(summary)?,
        violation: None,
    })
}

pub(crate) fn train(doc: &Value, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut cfg: TrainConfig = typed(doc)?;
    let seed = require_seed(cfg.seed, "train")?;
    cfg.seed = Some(seed);
    let exp = NetExperiment {
        template: cfg.arch.build(seed)?,
        data: cfg.data.clone(),
        train: cfg.train.clone(),
        train_loss: cfg.loss,
        eval_loss: cfg.loss,
        test_size: 0,
        seed,
    };
    let (net, data, trace) = exp.train_replication(0)?;
    out.write("network.json", (net.to_json()? + "\n").as_bytes())?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    out.write("trace.csv", &csv)?;
    let user_m = cfg.train.grad_moment;
    let summary = json!({
        "iterations": trace.records.len(),
        "final_train_loss": mean_loss(&net, &data.features, &data.labels, &cfg.loss)?,
        "grad_sq_max": trace.grad_sq_max,
        "moment_estimate": trace.moment_estimate(),
        "mi_budget_nats": trace.mi_budget_total,
        "snr_sum": trace.snr_prefix_sums().last().copied().unwrap_or(0.0),
        "mi_budget_user_moment": user_m.map(|m| trace.budget_with_moment(m)).transpose()?,
        "mi_budget_cap_user_moment": user_m.map(|m| trace.budget_cap_with_moment(m)),
    });
    out.write_json("train_summary.json", &summary)?;
    done(&cfg, Some(seed), &summary)
}

pub(crate) fn mi_chain(doc: &Value, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut cfg: ChainConfig = typed(doc)?;
    let seed = require_seed(cfg.seed, "mi-chain")?;
    cfg.seed = Some(seed);
    if cfg.replicas == 0 {
        return Err(CliError::Config("replicas must be at least 1".into()));
    }
    let nets = match &cfg.train {
        Some(train) => {
            let exp = NetExperiment {
                template: cfg.arch.build(seed)?,
                data: cfg.data.clone(),
                train: train.clone(),
                train_loss: cfg.loss,
                eval_loss: cfg.loss,
                test_size: 0,
                seed,
            };
            (0..cfg.replicas as u64)
                .into_par_iter()
                .map(|r| exp.train_replication(r).map(|t| t.0))
                .collect::<Result<Vec<_>, _>>()?
        }
        None => (0..cfg.replicas as u64)
            .map(|r| cfg.arch.build(rng::derive(seed, &[tag::INIT, r])))
            .collect::<Result<Vec<_>, _>>()?,
    };
    let mut probe_spec = cfg.data.clone();
    probe_spec.seed = rng::derive(seed, &[tag::DATA]);
    let probe = probe_spec.generate_test(cfg.probe_size)?;
    let chain = layer_mi_chain_replicated(&nets, &probe, cfg.bins)?;
    emit_plot_data(&ChainRow::from_chain(&chain), &out.path("chain.csv"))?;
    out.record("chain.csv")?;
    let summary = chain.summary(cfg.tolerance);
    if !summary.violations.is_empty() {
        eprintln!(
            "warning: {} layer(s) increase the estimated information by more than {}",
            summary.violations.len(),
            cfg.tolerance
        );
    }
    let report = json!({ "chain": chain, "summary": summary });
    out.write_json("chain.json", &report)?;
    done(&cfg, Some(seed), &report)
}

pub(crate) fn bounds(doc: &Value, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let cfg: BoundsConfig = typed(doc)?;
    let summary = match &cfg.inputs {
        BoundsInput::One(inputs) => {
            let report = evaluate(inputs)?;
            out.write_json("report.json", &report)?;
            pretty(&report)?
        }
        BoundsInput::Batch(all) => {
            if all.is_empty() {
                return Err(CliError::Config("empty BoundInputs array".into()));
            }
            let reports = all.iter().map(evaluate).collect::<Result<Vec<_>, _>>()?;
            let mut csv = Vec::new();
            write_batch_csv(&reports, &mut csv)?;
            out.write("bounds.csv", &csv)?;
            out.write_json("reports.json", &reports)?;
            String::from_utf8_lossy(&csv).trim_end().to_string()
        }
    };
    Ok(Outcome {
        snapshot: snapshot(&cfg)?,
        seed: None,
        summary,
        violation: None,
    })
}

enum Source {
    Net(Box<NetExperiment>),
    World(WorldExperiment, f64, f64),
}

impl Source {
    fn experiment(&self) -> &dyn Experiment {
        match self {
            Source::Net(e) => e.as_ref(),
            Source::World(e, ..) => e,
        }
    }
}

fn source(cfg: &GapConfig, seed: u64) -> Result<Source, CliError> {
    if let Some(world) = &cfg.world {
        if cfg.arch.is_some() || cfg.data.is_some() || cfg.train.is_some() {
            return Err(CliError::Config(
                "give either `world` or `arch`/`data`/`train`, not both".into(),
            ));
        }
        let compiled = world.compile()?;
        let exact = exact_from_compiled(&compiled)?;
        return Ok(Source::World(
            WorldExperiment { world: compiled, seed },
            exact.exact_gap,
            exact.exact_beta,
        ));
    }
    let (Some(arch), Some(data), Some(train)) = (&cfg.arch, &cfg.data, &cfg.train) else {
        return Err(CliError::Config(
            "`arch`, `data` and `train` are required without a world".into(),
        ));
    };
    Ok(Source::Net(Box::new(NetExperiment {
        template: arch.build(seed)?,
        data: data.clone(),
        train: train.clone(),
        train_loss: cfg.train_loss,
        eval_loss: cfg.eval_loss,
        test_size: cfg.test_size,
        seed,
    })))
}

pub(crate) fn gap(doc: &Value, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut cfg: GapConfig = typed(doc)?;
    let seed = require_seed(cfg.seed, "gap")?;
    cfg.seed = Some(seed);
    let src = source(&cfg, seed)?;
    let est = measure_gap(src.experiment(), cfg.replications)?;
    let mut csv = Vec::new();
    est.write_csv(&mut csv)?;
    out.write("gap.csv", &csv)?;
    let summary = json!({
        "replications": est.replications,
        "mean_gap": est.mean,
        "std_error": est.std_error,
        "exact_gap": match src { Source::World(_, g, _) => Some(g), _ => None },
    });
    out.write_json("gap_summary.json", &summary)?;
    done(&cfg, Some(seed), &summary)
}

pub(crate) fn stability(doc: &Value, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut cfg: GapConfig = typed(doc)?;
    let seed = require_seed(cfg.seed, "stability")?;
    cfg.seed = Some(seed);
    let src = source(&cfg, seed)?;
    let est = replace_one_stability(src.experiment(), cfg.replications)?;
    let mut csv = Vec::new();
    est.write_csv(&mut csv)?;
    out.write("stability.csv", &csv)?;
    let summary = json!({
        "replications": est.replications,
        "mean_stability": est.mean,
        "std_error": est.std_error,
        "exact_stability": match src { Source::World(_, _, b) => Some(b), _ => None },
    });
    out.write_json("stability_summary.json", &summary)?;
    done(&cfg, Some(seed), &summary)
}

pub(crate) fn sweep(doc: &Value, out: &mut OutputDir) -> Result<Outcome, CliError> {
    if doc.get("seed").is_none() {
        require_seed(None, "sweep")?;
    }
    let cfg: SweepConfig = typed(doc)?;
    let rows = depth_sweep(&cfg)?;
    emit_plot_data(&rows, &out.path("sweep.csv"))?;
    out.record("sweep.csv")?;
    out.write_json("sweep.json", &rows)?;
    let brief: Vec<_> = rows
        .iter()
        .map(|r| json!({"L": r.depth, "mean_gap": r.mean_gap, "eta_geo": r.eta_geo, "main_bound": r.main_bound}))
        .collect();
    done(&cfg, Some(cfg.seed), &brief)
}

pub(crate) fn tinyworld(doc: &Value, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let cfg: TinyWorldConfig = typed(doc)?;
    let compiled = cfg.world.compile_with_budget(cfg.budget)?;
    let report = exact_from_compiled(&compiled)?;
    let (soundness, violation) = match soundness_from_report(&report) {
        Ok(s) => {
            let v = (!s.holds).then(|| format!("bound below exact gap: {s:?}"));
            (Some(s), v)
        }
        Err(crate::experiments::ExperimentError::Soundness(m)) => (None, Some(m)),
        Err(e) => return Err(e.into()),
    };
    let summary = json!({
        "name": cfg.world.name,
        "mi": report.mi_s_w,
        "gap": report.exact_gap,
        "beta": report.exact_beta,
        "eta_exact": report.eta_exact,
        "mi_chain": report.mi_chain.mi_per_layer,
        "soundness": soundness,
    });
    out.write_json("tinyworld.json", &json!({ "report": report, "soundness": soundness }))?;
    Ok(Outcome {
        snapshot: snapshot(&cfg)?,
        seed: None,
        summary: pretty(&summary)?,
        violation,
    })
}

pub(crate) fn check(doc: &Value, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let mut cfg: CheckConfig = typed(doc)?;
    let mut worlds: Vec<(String, TinyWorld)> = match &cfg.corpus {
        Some(c) => c
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, w)| (w.name.clone().unwrap_or(format!("world-{i}")), w))
            .collect(),
        None => shipped_worlds()?
            .into_iter()
            .enumerate()
            .map(|(i, w)| (w.name.clone().unwrap_or(format!("shipped-{i}")), w))
            .collect(),
    };
    if cfg.random_worlds > 0 {
        let seed = require_seed(cfg.seed, "check with random_worlds")?;
        cfg.seed = Some(seed);
        worlds.extend((0..cfg.random_worlds).map(|i| {
            (
                format!("random-{i}"),
                random_world(rng::derive(seed, &[tag::WORLD, i]), cfg.shape),
            )
        }));
    }
    if worlds.is_empty() {
        return Err(CliError::Config("no worlds to check".into()));
    }
    let checked = worlds
        .par_iter()
        .map(|(name, w)| {
            let compiled = w.compile_with_budget(DEFAULT_STATE_BUDGET)?;
            let exact = exact_from_compiled(&compiled)?;
            Ok((name.clone(), soundness_from_report(&exact)))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for (name, res) in checked {
        match res {
            Ok(report) => {
                if !report.holds {
                    violations.push(format!(
                        "{name}: gap {} vs bounds {} / {}",
                        report.abs_gap, report.lemma4_bound, report.theorem2_bound
                    ));
                }
                rows.push(CheckRow { world: name, report });
            }
            Err(crate::experiments::ExperimentError::Soundness(m)) => violations.push(format!("{name}: {m}")),
            Err(e) => return Err(e.into()),
        }
    }
    if !rows.is_empty() {
        emit_plot_data(&rows, &out.path("check.csv"))?;
        out.record("check.csv")?;
    }
    let fold = |f: fn(&CheckRow) -> f64, max: bool| {
        rows.iter()
            .map(f)
            .fold(if max { f64::NEG_INFINITY } else { f64::INFINITY }, |a, b| {
                if max {
                    a.max(b)
                } else {
                    a.min(b)
                }
            })
    };
    let summary = json!({
        "worlds": worlds.len(),
        "violations": violations.len(),
        "max_abs_gap": fold(|r| r.report.abs_gap, true),
        "lemma4_slack": {"min": fold(|r| r.report.lemma4_slack, false), "max": fold(|r| r.report.lemma4_slack, true)},
        "theorem2_slack": {"min": fold(|r| r.report.theorem2_slack, false), "max": fold(|r| r.report.theorem2_slack, true)},
        "failures": violations,
    });
    out.write_json("check_summary.json", &summary)?;
    Ok(Outcome {
        snapshot: snapshot(&cfg)?,
        seed: cfg.seed,
        summary: pretty(&summary)?,
        violation: (!violations.is_empty()).then(|| format!("{} world(s) violate a bound", violations.len())),
    })
}
