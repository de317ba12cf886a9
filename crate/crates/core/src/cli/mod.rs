//! The `infobound` command line: subcommands, exit codes, run manifests.
//!
//! Exit codes: 0 success, 1 config or usage error, 2 runtime error,
//! 3 soundness violation found by `check` or `tinyworld`.

mod commands;
pub mod config;
pub mod corpus;
mod manifest;
mod plot;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use thiserror::Error;

use crate::bounds::BoundError;
use crate::data::DataError;
use crate::experiments::ExperimentError;
use crate::net::NetError;
use crate::optim::OptimError;

pub use manifest::{OutputEntry, RunManifest, TOOL_VERSION};
pub use plot::{emit_plot_data, PlotRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_SOUNDNESS: i32 = 3;

/// Environment variable read when `--threads` is absent.
pub const THREADS_ENV: &str = "INFOBOUND_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("soundness violation: {0}")]
    Soundness(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Soundness(_) => EXIT_SOUNDNESS,
        }
    }
}

fn net_is_config(e: &NetError) -> bool {
    matches!(
        e,
        NetError::InvalidLayer(_) | NetError::InvalidLoss(_) | NetError::NonDifferentiable | NetError::Json(_)
    )
}

fn optim_is_config(e: &OptimError) -> bool {
    match e {
        OptimError::InvalidSchedule(_)
        | OptimError::InvalidRate(_)
        | OptimError::DatasetTooSmall { .. }
        | OptimError::ScheduleCount(..) => true,
        OptimError::Net(n) => net_is_config(n),
        _ => false,
    }
}

fn bound_is_config(e: &BoundError) -> bool {
    match e {
        BoundError::InvalidInput(_) | BoundError::Missing(..) | BoundError::InfiniteHorizon => true,
        BoundError::Schedule(o) => optim_is_config(o),
        _ => false,
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let config = match &e {
            ExperimentError::InvalidWorld(_) | ExperimentError::InvalidConfig(_) | ExperimentError::Budget { .. } => {
                true
            }
            ExperimentError::Soundness(m) => return CliError::Soundness(m.clone()),
            ExperimentError::Data(DataError::InvalidSpec(_)) => true,
            ExperimentError::Net(n) => net_is_config(n),
            ExperimentError::Optim(o) => optim_is_config(o),
            ExperimentError::Bound(b) => bound_is_config(b),
            _ => false,
        };
        if config {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<BoundError> for CliError {
    fn from(e: BoundError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<crate::info::InfoError> for CliError {
    fn from(e: crate::info::InfoError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "infobound",
    version,
    about = "Information-theoretic generalization bounds for deep networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Config file (TOML or JSON), or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: $INFOBOUND_THREADS, else 1).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one network with noisy SGD and record the information budget.
    Train(Common),
    /// Layer-wise mutual information chain of a (trained) network.
    MiChain(Common),
    /// Evaluate bound formulas from a JSON document.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// BoundInputs object or array of them.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Monte Carlo generalization gap.
    Gap {
        #[command(flatten)]
        common: Common,
        /// Use a tiny world as the data source and trainer.
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// Monte Carlo replace-one stability.
    Stability {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// Gap, chain and bound across depths.
    Sweep(Common),
    /// Exact enumeration of a tiny world.
    Tinyworld {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        world: Option<PathBuf>,
    },
    /// Soundness of both bounds over a tiny-world corpus.
    Check {
        #[command(flatten)]
        common: Common,
        /// Directory of world JSON files replacing the shipped corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::MiChain(_) => "mi-chain",
            Command::Bounds { .. } => "bounds",
            Command::Gap { .. } => "gap",
            Command::Stability { .. } => "stability",
            Command::Sweep(_) => "sweep",
            Command::Tinyworld { .. } => "tinyworld",
            Command::Check { .. } => "check",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Train(c) | Command::MiChain(c) | Command::Sweep(c) => c,
            Command::Bounds { common, .. }
            | Command::Gap { common, .. }
            | Command::Stability { common, .. }
            | Command::Tinyworld { common, .. }
            | Command::Check { common, .. } => common,
        }
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr, summaries to stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("infobound {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(CliError::Config("thread count must be at least 1".into()));
    }
    Ok(n)
}

/// Loads the config document; a manifest contributes its snapshot.
fn load_config(cmd: &Command) -> Result<(Value, Option<String>), CliError> {
    let common = cmd.common();
    let Some(path) = &common.config else {
        return Ok((Value::Null, None));
    };
    let doc = config::read_document(path)?;
    let doc = match config::manifest_snapshot(&doc) {
        Some((sub, snapshot)) => {
            if sub != cmd.name() {
                return Err(CliError::Config(format!(
                    "manifest was written by `{sub}`, not `{}`",
                    cmd.name()
                )));
            }
            snapshot
        }
        None => doc,
    };
    Ok((doc, Some(path.display().to_string())))
}

fn read_json_file(path: &PathBuf) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn execute(cmd: &Command) -> Result<String, CliError> {
    let start = Instant::now();
    let common = cmd.common();
    let threads = thread_count(common.threads)?;
    let (mut doc, config_path) = load_config(cmd)?;
    if let Some(seed) = common.seed {
        config::set_key(&mut doc, "seed", seed.into())?;
    }
    match cmd {
        Command::Bounds { input: Some(p), .. } => config::set_key(&mut doc, "inputs", read_json_file(p)?)?,
        Command::Gap { world: Some(p), .. }
        | Command::Stability { world: Some(p), .. }
        | Command::Tinyworld { world: Some(p), .. } => config::set_key(&mut doc, "world", read_json_file(p)?)?,
        Command::Check { corpus: Some(dir), .. } => {
            config::set_key(&mut doc, "corpus", Value::Array(corpus::read_dir(dir)?))?
        }
        _ => {}
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::create_dir_all(&common.out).map_err(|e| CliError::Runtime(format!("{}: {e}", common.out.display())))?;
    let mut out = manifest::OutputDir::new(&common.out);
    let outcome = pool.install(|| match cmd {
        Command::Train(_) => commands::train(&doc, &mut out),
        Command::MiChain(_) => commands::mi_chain(&doc, &mut out),
        Command::Bounds { .. } => commands::bounds(&doc, &mut out),
        Command::Gap { .. } => commands::gap(&doc, &mut out),
        Command::Stability { .. } => commands::stability(&doc, &mut out),
        Command::Sweep(_) => commands::sweep(&doc, &mut out),
        Command::Tinyworld { .. } => commands::tinyworld(&doc, &mut out),
        Command::Check { .. } => commands::check(&doc, &mut out),
    })?;

    let manifest = RunManifest {
        subcommand: cmd.name().to_string(),
        config_path,
        inputs_sha256: manifest::sha256_hex(outcome.snapshot.to_string().as_bytes()),
        config: outcome.snapshot,
        seed: outcome.seed,
        tool_version: TOOL_VERSION.to_string(),
        threads,
        outputs: out.entries().to_vec(),
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.write(&common.out)?;
    if let Some(violation) = outcome.violation {
        eprintln!("{}", outcome.summary);
        return Err(CliError::Soundness(violation));
    }
    Ok(outcome.summary)
}
