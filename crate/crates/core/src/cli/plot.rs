//! Plot-data CSV emission.

use std::path::Path;

use super::CliError;
use crate::experiments::{SoundnessReport, SweepRow};
use crate::info::InfoChain;
use crate::optim::TraceRecord;

/// A row type with a fixed CSV header.
pub trait PlotRow {
    const HEADER: &'static [&'static str];
    fn cells(&self) -> Vec<String>;
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl PlotRow for SweepRow {
    const HEADER: &'static [&'static str] = &["L", "mean_gap", "stderr", "mi_last", "eta_geo", "main_bound"];
    fn cells(&self) -> Vec<String> {
        vec![
            self.depth.to_string(),
            self.mean_gap.to_string(),
            opt(self.stderr),
            self.mi_last.to_string(),
            opt(self.eta_geo),
            opt(self.main_bound),
        ]
    }
}

impl PlotRow for TraceRecord {
    const HEADER: &'static [&'static str] = &[
        "t",
        "alpha",
        "sigma",
        "head_grad_sq",
        "budget_increment",
        "budget_total",
    ];
    fn cells(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            self.alpha.to_string(),
            self.sigma.to_string(),
            self.head_grad_sq.to_string(),
            self.budget_increment.to_string(),
            self.budget_total.to_string(),
        ]
    }
}

/// One row of the `mi-chain` plot data.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRow {
    pub k: usize,
    pub mi_nats: f64,
    pub eta_k: Option<f64>,
}

impl ChainRow {
    pub fn from_chain(chain: &InfoChain) -> Vec<Self> {
        chain
            .mi_per_layer
            .iter()
            .enumerate()
            .map(|(k, &mi)| ChainRow {
                k,
                mi_nats: mi,
                eta_k: if k == 0 { None } else { chain.eta_per_layer[k - 1] },
            })
            .collect()
    }
}

impl PlotRow for ChainRow {
    const HEADER: &'static [&'static str] = &["k", "mi_nats", "eta_k"];
    fn cells(&self) -> Vec<String> {
        vec![self.k.to_string(), self.mi_nats.to_string(), opt(self.eta_k)]
    }
}

/// One world in a `check` run.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub world: String,
    pub report: SoundnessReport,
}

impl PlotRow for CheckRow {
    const HEADER: &'static [&'static str] = &[
        "world",
        "abs_gap",
        "mi_last",
        "lemma4_bound",
        "lemma4_slack",
        "theorem2_bound",
        "theorem2_slack",
        "holds",
    ];
    fn cells(&self) -> Vec<String> {
        let r = &self.report;
        vec![
            self.world.clone(),
            r.abs_gap.to_string(),
            r.mi_last.to_string(),
            r.lemma4_bound.to_string(),
            r.lemma4_slack.to_string(),
            r.theorem2_bound.to_string(),
            r.theorem2_slack.to_string(),
            r.holds.to_string(),
        ]
    }
}

/// Writes `rows` as CSV under the row type's header.
pub fn emit_plot_data<R: PlotRow>(rows: &[R], path: &Path) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Runtime(format!("no rows to write to {}", path.display())));
    }
    let io = |e: csv::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(R::HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.cells()).map_err(io)?;
    }
    w.flush()
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_rows_header_matches_library_csv() {
        let chain = InfoChain::from_mi(vec![1.0, 0.5], crate::info::Realization::Exact).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        emit_plot_data(&ChainRow::from_chain(&chain), &p).unwrap();
        let mut lib = Vec::new();
        chain.write_csv(&mut lib).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), lib);
    }

    #[test]
    fn empty_rows_and_bad_path_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot_data::<ChainRow>(&[], &dir.path().join("x.csv")).is_err());
        let row = ChainRow {
            k: 0,
            mi_nats: 0.0,
            eta_k: None,
        };
        assert!(emit_plot_data(&[row], &dir.path().join("missing/x.csv")).is_err());
    }
}
