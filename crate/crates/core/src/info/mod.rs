//! Entropy, mutual information, layer-wise information chains, the
//! Donsker–Varadhan bound and growth-function bounds. All values in nats.

mod binning;
mod chain;
mod dv;
mod entropy;
mod growth;

use thiserror::Error;

pub use binning::{bin_cells, bin_features, RangePolicy, DEFAULT_BINS};
pub use chain::{
    dpi_check, layer_mi_chain, layer_mi_chain_replicated, ChainSummary, DpiViolation, InfoChain, Realization, ETA_FLOOR,
};
pub use dv::{dv_lower_bound, dv_lower_bound_exact, DvEstimate};
pub use entropy::{discrete_entropy, joint_mi, kl_divergence, plugin_mi, DiscretePmf, JointCounts};
pub use growth::{exact_dichotomy_count, sauer_growth_bound, sauer_log_growth_bound};

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("invalid distribution: {0}")]
    InvalidPmf(String),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("supports differ in size ({0} vs {1})")]
    SupportMismatch(usize, usize),
    #[error("binning: {0}")]
    Binning(String),
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
