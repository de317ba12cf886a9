//! Dataset-driven Monte Carlo experiments, depth sweeps and tiny-world
//! exact oracles.

mod montecarlo;
mod sweep;
mod world;

use thiserror::Error;

pub use montecarlo::{
    measure_gap, replace_one_stability, Estimate, Experiment, GapEstimate, GapRecord, NetExperiment, StabilityEstimate,
    StabilityRecord, WorldExperiment,
};
pub use sweep::{depth_sweep, write_sweep_csv, StackKind, SweepConfig, SweepRow};
pub use world::{
    exact_from_compiled, lemma4_soundness_check, random_world, soundness_from_report, tiny_world_exact, AlgorithmSpec,
    CompiledWorld, HypothesisSpace, SoundnessReport, TinyWorld, TinyWorldReport, WorldPoint, WorldShape,
    DEFAULT_STATE_BUDGET, MAX_HYPOTHESES, MAX_POINTS, MAX_SAMPLE_SIZE, MI_FLOOR, SOUNDNESS_TOL,
};

pub use crate::data::{Dataset, DatasetSpec, Generator};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid tiny world: {0}")]
    InvalidWorld(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("enumeration needs {states} joint states, above the budget of {budget}")]
    Budget { states: u64, budget: u64 },
    #[error("soundness violation: {0}")]
    Soundness(String),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error(transparent)]
    Optim(#[from] crate::optim::OptimError),
    #[error(transparent)]
    Info(#[from] crate::info::InfoError),
    #[error(transparent)]
    Bound(#[from] crate::bounds::BoundError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("world JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
