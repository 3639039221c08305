//! Artifact writers: metrics JSON and plot-ready CSVs.

use std::fs;
use std::path::{Path, PathBuf};

use fbnn_core::diagnostics::{CalibrationBins, CredibleBand};
use fbnn_core::predictive::PredictiveSummary;
use fbnn_core::samplers::ChainTrace;
use fbnn_core::Task;

use crate::error::{Error, Result};
use crate::experiment::{Metrics, RunOutput};

pub const METRICS_FILE: &str = "metrics.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const BAND_FILE: &str = "band.csv";
pub const BINS_FILE: &str = "bins.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_owned(),
        source,
    })
}

/// Writes rows of string fields under `header`.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r.into_iter().collect::<Vec<_>>()).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics(path: &Path, m: &Metrics) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Metrics> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })
}

/// `step, potential, accepted, wall_time, theta_0, ...`.
pub fn write_trace(path: &Path, trace: &ChainTrace) -> Result<()> {
    let mut header: Vec<String> = ["step", "potential", "accepted", "wall_time"].map(String::from).to_vec();
    header.extend((0..trace.dim()).map(|j| format!("theta_{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..trace.len()).map(|i| {
        let mut r = vec![
            i.to_string(),
            trace.potentials[i].to_string(),
            u8::from(trace.accepted[i]).to_string(),
            trace.wall_times[i].to_string(),
        ];
        r.extend(trace.sample(i).iter().map(f64::to_string));
        r
    });
    write_csv(path, &header, rows)
}

pub fn write_band(path: &Path, band: &CredibleBand) -> Result<()> {
    write_csv(
        path,
        &["projection", "mean", "lower", "upper", "truth", "smoothed_truth"],
        band.rows.iter().map(|r| {
            [r.projection, r.mean, r.lower, r.upper, r.truth, r.smoothed_truth].map(|v| v.to_string())
        }),
    )
}

pub fn write_bins(path: &Path, bins: &CalibrationBins) -> Result<()> {
    write_csv(
        path,
        &["bin", "confidence_low", "confidence_high", "confidence", "accuracy", "count"],
        (0..bins.count.len()).map(|b| {
            vec![
                b.to_string(),
                bins.bin_edges[b].0.to_string(),
                bins.bin_edges[b].1.to_string(),
                bins.confidence[b].to_string(),
                bins.accuracy[b].to_string(),
                bins.count[b].to_string(),
            ]
        }),
    )
}

/// Per test point: mean, interval and truth for regression; class
/// probabilities, predicted and true label for classification.
pub fn write_predictions(path: &Path, s: &PredictiveSummary, out: &RunOutput) -> Result<()> {
    let q = s.mean.cols();
    match s.task {
        Task::Regression => {
            let mut header = Vec::new();
            for k in 0..q {
                header.extend([format!("mean_{k}"), format!("lower_{k}"), format!("upper_{k}"), format!("truth_{k}")]);
            }
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(
                path,
                &header,
                (0..s.mean.rows()).map(|i| {
                    (0..q)
                        .flat_map(|k| {
                            [s.mean.get(i, k), s.lower.get(i, k), s.upper.get(i, k), out.y_test.get(i, k)]
                                .map(|v| v.to_string())
                        })
                        .collect::<Vec<_>>()
                }),
            )
        }
        Task::Classification => {
            let mut header: Vec<String> = (0..q).map(|k| format!("prob_{k}")).collect();
            header.extend(["predicted".into(), "label".into()]);
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let predicted = s.labels.clone().unwrap_or_default();
            let labels = out.labels_test.clone().unwrap_or_default();
            write_csv(
                path,
                &header,
                (0..s.mean.rows()).map(|i| {
                    let mut r: Vec<String> = s.mean.row(i).iter().map(f64::to_string).collect();
                    r.push(predicted.get(i).map_or(String::new(), usize::to_string));
                    r.push(labels.get(i).map_or(String::new(), usize::to_string));
                    r
                }),
            )
        }
    }
}

/// Writes every artifact the run produced into `dir`; returns the paths.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let p = dir.join(name);
        f(&p)?;
        written.push(p);
        Ok(())
    };
    emit(METRICS_FILE, &|p| write_metrics(p, &out.metrics))?;
    if let Some(t) = &out.trace {
        emit(TRACE_FILE, &|p| write_trace(p, t))?;
    }
    if let Some(s) = &out.summary {
        emit(PREDICTIONS_FILE, &|p| write_predictions(p, s, out))?;
    }
    if let Some(b) = &out.band {
        emit(BAND_FILE, &|p| write_band(p, b))?;
    }
    if let Some(b) = &out.bins {
        emit(BINS_FILE, &|p| write_bins(p, b))?;
    }
    Ok(written)
}
