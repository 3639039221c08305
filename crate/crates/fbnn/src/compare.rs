//! Aggregates run reports into one comparison table.

use std::path::{Path, PathBuf};

use fbnn_core::diagnostics::spdup_from_rates;
use fbnn_core::Task;

use crate::error::{Error, Result};
use crate::experiment::Metrics;
use crate::report::{read_metrics, write_csv};

/// Column order of `comparison.csv`.
pub const COLUMNS: [&str; 11] = [
    "method",
    "source",
    "mse_or_acc",
    "cp_or_ece",
    "time_s",
    "ess_min",
    "ess_med",
    "ess_max",
    "min_ess_per_s",
    "spdup",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub source: PathBuf,
    pub mse_or_acc: Option<f64>,
    pub cp_or_ece: Option<f64>,
    pub time_s: f64,
    pub ess_min: Option<f64>,
    pub ess_med: Option<f64>,
    pub ess_max: Option<f64>,
    pub min_ess_per_s: Option<f64>,
    pub spdup: Option<f64>,
    pub status: String,
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl ComparisonRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.method.clone(),
            self.source.display().to_string(),
            cell(self.mse_or_acc),
            cell(self.cp_or_ece),
            self.time_s.to_string(),
            cell(self.ess_min),
            cell(self.ess_med),
            cell(self.ess_max),
            cell(self.min_ess_per_s),
            cell(self.spdup),
            self.status.clone(),
        ]
    }
}

/// One row per report; `spdup` is each report's minESS/s over the report
/// whose method is `baseline`.
pub fn compare_metrics(reports: &[(PathBuf, Metrics)], baseline: &str) -> Result<Vec<ComparisonRow>> {
    if reports.len() < 2 {
        return Err(Error::Config("compare needs at least two reports".into()));
    }
    let base = reports
        .iter()
        .find(|(_, m)| m.method == baseline)
        .ok_or_else(|| Error::Config(format!("no report tagged with the baseline method {baseline:?}")))?;
    let base_rate = base.1.min_ess_per_s;
    reports
        .iter()
        .map(|(path, m)| {
            let (a, b) = match m.task {
                Some(Task::Classification) => (m.accuracy, m.ece),
                _ => (m.mse, m.cp),
            };
            let spdup = match (m.min_ess_per_s, base_rate) {
                (Some(r), Some(b)) => Some(spdup_from_rates(r, b)?),
                _ => None,
            };
            Ok(ComparisonRow {
                method: m.method.clone(),
                source: path.clone(),
                mse_or_acc: a,
                cp_or_ece: b,
                time_s: m.seconds_total,
                ess_min: m.ess_min,
                ess_med: m.ess_med,
                ess_max: m.ess_max,
                min_ess_per_s: m.min_ess_per_s,
                spdup,
                status: m.status.clone(),
            })
        })
        .collect()
}

/// Reads `metrics.json` files (or directories holding one) and writes the table.
pub fn compare(paths: &[PathBuf], baseline: &str, out: &Path) -> Result<Vec<ComparisonRow>> {
    let reports = paths
        .iter()
        .map(|p| {
            let file = if p.is_dir() { p.join(crate::report::METRICS_FILE) } else { p.clone() };
            read_metrics(&file).map(|m| (p.clone(), m))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = compare_metrics(&reports, baseline)?;
    write_csv(out, &COLUMNS, rows.iter().map(ComparisonRow::cells))?;
    Ok(rows)
}
