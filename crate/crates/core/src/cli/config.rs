//! Subcommand configs and their resolution from TOML/JSON files, manifests
//! and command-line overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::CliError;
use crate::bounds::BoundInputs;
use crate::data::DatasetSpec;
use crate::experiments::{TinyWorld, WorldShape, DEFAULT_STATE_BUDGET};
use crate::info::DEFAULT_BINS;
use crate::net::{ArchSpec, LossEvaluator};
use crate::optim::NoisySgdConfig;

fn ce() -> LossEvaluator {
    LossEvaluator::clipped_cross_entropy()
}
fn zero_one() -> LossEvaluator {
    LossEvaluator::zero_one()
}
fn bins() -> usize {
    DEFAULT_BINS
}
fn dpi_tolerance() -> f64 {
    0.02
}
fn one() -> usize {
    1
}
fn probe_size() -> usize {
    500
}
fn test_size() -> usize {
    200
}
fn budget() -> u64 {
    DEFAULT_STATE_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: ArchSpec,
    pub data: DatasetSpec,
    pub train: NoisySgdConfig,
    #[serde(default = "ce")]
    pub loss: LossEvaluator,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub arch: ArchSpec,
    /// Training distribution; the probe set is drawn from its test stream.
    pub data: DatasetSpec,
    /// Trains `replicas` networks before measuring; omitted = initial weights.
    #[serde(default)]
    pub train: Option<NoisySgdConfig>,
    #[serde(default = "ce")]
    pub loss: LossEvaluator,
    #[serde(default = "one")]
    pub replicas: usize,
    #[serde(default = "probe_size")]
    pub probe_size: usize,
    #[serde(default = "bins")]
    pub bins: usize,
    #[serde(default = "dpi_tolerance")]
    pub tolerance: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapConfig {
    /// A tiny world whose algorithm kernel is the trainer; replaces
    /// `arch`/`data`/`train` when present.
    #[serde(default)]
    pub world: Option<TinyWorld>,
    #[serde(default)]
    pub arch: Option<ArchSpec>,
    #[serde(default)]
    pub data: Option<DatasetSpec>,
    #[serde(default)]
    pub train: Option<NoisySgdConfig>,
    #[serde(default = "ce")]
    pub train_loss: LossEvaluator,
    #[serde(default = "zero_one")]
    pub eval_loss: LossEvaluator,
    #[serde(default = "test_size")]
    pub test_size: usize,
    pub replications: u64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyWorldConfig {
    pub world: TinyWorld,
    #[serde(default = "budget")]
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BoundsInput {
    One(BoundInputs),
    Batch(Vec<BoundInputs>),
}

// Dispatch on the JSON shape so field errors are reported as such.
impl<'de> Deserialize<'de> for BoundsInput {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = Value::deserialize(d)?;
        if v.is_array() {
            serde_json::from_value(v)
                .map(BoundsInput::Batch)
                .map_err(D::Error::custom)
        } else {
            serde_json::from_value(v)
                .map(BoundsInput::One)
                .map_err(D::Error::custom)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub inputs: BoundsInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    /// Worlds to check; the shipped corpus when omitted.
    #[serde(default)]
    pub corpus: Option<Vec<TinyWorld>>,
    /// Additional randomly generated worlds (requires a seed).
    #[serde(default)]
    pub random_worlds: u64,
    #[serde(default)]
    pub shape: WorldShape,
    pub seed: Option<u64>,
}

/// Reads a TOML or JSON document into a JSON value. The extension decides;
/// other files are tried as JSON, then TOML.
pub fn read_document(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        Some("toml") => Format::Toml,
        _ => Format::Either,
    };
    parse_document(&text, format).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Toml,
    Either,
}

pub fn parse_document(text: &str, format: Format) -> Result<Value, String> {
    let json = || serde_json::from_str::<Value>(text).map_err(|e| e.to_string());
    let toml = || toml::from_str::<Value>(text).map_err(|e| e.to_string());
    match format {
        Format::Json => json(),
        Format::Toml => toml(),
        Format::Either => json().or_else(|je| toml().map_err(|te| format!("not JSON ({je}) nor TOML ({te})"))),
    }
}

/// If `doc` is a run manifest, returns its subcommand and config snapshot.
pub fn manifest_snapshot(doc: &Value) -> Option<(String, Value)> {
    let obj = doc.as_object()?;
    let sub = obj.get("subcommand")?.as_str()?.to_string();
    let cfg = obj.get("config")?.clone();
    obj.get("tool_version")?;
    Some((sub, cfg))
}

pub fn set_key(doc: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    match doc {
        Value::Object(m) => {
            m.insert(key.to_string(), value);
            Ok(())
        }
        Value::Null => {
            let mut m = Map::new();
            m.insert(key.to_string(), value);
            *doc = Value::Object(m);
            Ok(())
        }
        _ => Err(CliError::Config("config must be a table/object".into())),
    }
}

pub fn typed<T: DeserializeOwned>(doc: &Value) -> Result<T, CliError> {
    let doc = if doc.is_null() {
        Value::Object(Map::new())
    } else {
        doc.clone()
    };
    serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))
}

pub fn snapshot<T: Serialize>(cfg: &T) -> Result<Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn require_seed(seed: Option<u64>, sub: &str) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Config(format!("{sub} needs a seed: pass --seed or set `seed` in the config")))
}
