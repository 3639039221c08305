//! Dataset ingestion: synthetic generators and CSV files.

use std::collections::BTreeMap;
use std::path::Path;

use fbnn_core::linalg::least_squares;
use fbnn_core::rng::stream;
use fbnn_core::synthetic::{self, mean_std, SyntheticSpec};
use fbnn_core::{Dataset, DatasetSplit, Matrix, Task};

use crate::config::DataSource;
use crate::error::{Error, Result};

/// A split with standardized features plus what was used to standardize.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: DatasetSplit,
    /// Regression noise variance in the units of the stored target, when known.
    pub noise_variance: Option<f64>,
    /// Feature `(mean, std)` from the training rows.
    pub feature_stats: Vec<(f64, f64)>,
    /// Regression target `(mean, std)` from the training rows.
    pub target_stats: Option<(f64, f64)>,
    pub feature_names: Vec<String>,
    /// Original class values in label order.
    pub class_names: Vec<String>,
}

/// Raw table: header plus numeric feature rows and the raw target column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub feature_names: Vec<String>,
    pub features: Matrix,
    pub target: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | "?")
}

/// Reads a headered CSV. Feature cells must be numeric; missing cells anywhere
/// are counted and rejected.
pub fn read_table(path: &Path, target_column: &str) -> Result<RawTable> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Config(format!("{}: no column named {target_column:?}", path.display())))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let mut values = Vec::new();
    let mut target = Vec::new();
    let mut missing = 0usize;
    let mut first_bad: Option<Error> = None;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        // Header is line 1.
        let row = r + 2;
        for (c, cell) in record.iter().enumerate() {
            if is_missing(cell) {
                missing += 1;
                continue;
            }
            if c == target_idx {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    first_bad.get_or_insert_with(|| Error::NonNumeric {
                        path: path.to_owned(),
                        row,
                        column: headers[c].clone(),
                        value: cell.to_owned(),
                    });
                }
            }
        }
        target.push(record.get(target_idx).unwrap_or_default().to_owned());
    }
    if missing > 0 {
        return Err(Error::MissingValues {
            path: path.to_owned(),
            count: missing,
        });
    }
    if let Some(e) = first_bad {
        return Err(e);
    }
    let features = Matrix::from_vec(target.len(), feature_names.len(), values)?;
    Ok(RawTable {
        feature_names,
        features,
        target,
    })
}

fn train_stats(m: &Matrix, rows: &[usize]) -> Vec<(f64, f64)> {
    (0..m.cols())
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|&i| m.get(i, j)).collect();
            mean_std(&col)
        })
        .collect()
}

/// Loads a CSV, splits it (stratified for classification) and z-scores the
/// features, and a regression target, with training-row statistics only.
pub fn load_csv(path: &Path, target_column: &str, task: Task, test_fraction: f64, seed: u64) -> Result<PreparedData> {
    let table = read_table(path, target_column)?;
    let n = table.target.len();
    if n < 2 {
        return Err(Error::Config(format!("{}: need at least two rows", path.display())));
    }
    let (data, class_names) = match task {
        Task::Regression => {
            let y = table
                .target
                .iter()
                .enumerate()
                .map(|(r, s)| {
                    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::NonNumeric {
                        path: path.to_owned(),
                        row: r + 2,
                        column: target_column.to_owned(),
                        value: s.clone(),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            (Dataset::regression(table.features, Matrix::from_vec(n, 1, y)?)?, Vec::new())
        }
        Task::Classification => {
            // Numeric class values sort numerically, others lexically.
            let mut classes: Vec<String> = table.target.clone();
            classes.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
                (Ok(x), Ok(y)) => x.total_cmp(&y),
                _ => a.cmp(b),
            });
            classes.dedup();
            let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
            let labels = table.target.iter().map(|t| index[t.as_str()]).collect();
            (Dataset::classification(table.features, labels, classes.len().max(2))?, classes)
        }
    };
    let mut split = DatasetSplit::random(data, test_fraction, &mut stream(seed, 1))?;
    let feature_stats = train_stats(&split.data.x, &split.train);
    synthetic::apply_standardization(&mut split.data.x, &feature_stats);
    let target_stats = (task == Task::Regression).then(|| {
        let s = train_stats(&split.data.y, &split.train);
        synthetic::apply_standardization(&mut split.data.y, &s);
        s[0]
    });
    Ok(PreparedData {
        split,
        noise_variance: None,
        feature_stats,
        target_stats,
        feature_names: table.feature_names,
        class_names,
    })
}

/// Residual variance of a ridge linear fit on the training rows, a
/// data-driven default for the regression noise level.
pub fn linear_residual_variance(split: &DatasetSplit) -> Result<f64> {
    let train = split.train_set();
    let y = train.y.column(0);
    let (coef, intercept) = least_squares(&train.x, &y, 1e-6)?;
    let rss: f64 = (0..train.len())
        .map(|i| {
            let pred: f64 = train.x.row(i).iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>() + intercept;
            (pred - y[i]).powi(2)
        })
        .sum();
    let dof = train.len().saturating_sub(coef.len() + 1).max(1);
    Ok((rss / dof as f64).max(1e-6))
}

/// Builds the dataset named by `source`; synthetic data uses `seed`.
pub fn prepare(source: &DataSource, seed: u64) -> Result<PreparedData> {
    match source {
        DataSource::Synthetic(spec) => {
            let spec = SyntheticSpec { seed, ..spec.clone() };
            let d = synthetic::generate(&spec)?;
            let p = d.split.data.x.cols();
            Ok(PreparedData {
                noise_variance: (spec.task == Task::Regression).then_some(d.noise_variance),
                split: d.split,
                feature_stats: vec![(0.0, 1.0); p],
                target_stats: None,
                feature_names: (0..p).map(|j| format!("x{j}")).collect(),
                class_names: (0..spec.n_classes).map(|c| c.to_string()).collect(),
            })
        }
        DataSource::Csv(c) => load_csv(&c.path, &c.target_column, c.task, c.test_fraction, seed),
    }
}

/// Writes a split back out as CSV: features, target, and a `split` column.
pub fn write_dataset(path: &Path, data: &PreparedData) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let d = &data.split.data;
    let mut header: Vec<String> = data.feature_names.clone();
    header.push("target".into());
    header.push("split".into());
    w.write_record(&header).map_err(csv_err)?;
    let mut role = vec!["train"; d.len()];
    for &i in &data.split.test {
        role[i] = "test";
    }
    for i in 0..d.len() {
        let mut rec: Vec<String> = d.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(match &d.labels {
            Some(l) => l[i].to_string(),
            None => d.y.get(i, 0).to_string(),
        });
        rec.push(role[i].to_owned());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
