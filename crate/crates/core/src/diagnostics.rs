//! Chain and predictive diagnostics: ESS, speed-up, regression and
//! classification metrics, PCA credible bands, grid Hellinger distance and
//! the 25-component Gaussian mixture demo target.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};
use crate::math;
use crate::model::Task;
use crate::predictive::{PredictiveDraws, PredictiveSummary};
use crate::samplers::{ChainTrace, Target};

// ---------------------------------------------------------------- ESS

/// Effective sample size of one series.
///
/// `T / (1 + 2 sum rho_k)`, truncated by Geyer's initial positive sequence:
/// pairs `rho_{2m} + rho_{2m+1}` are summed while positive. A constant series
/// has ESS `T`. The result is clamped to `[1, T]`.
pub fn ess(series: &[f64]) -> Result<f64> {
    let t = series.len();
    if t < 4 {
        return Err(Error::invalid("ESS needs at least 4 draws"));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("ESS input contains non-finite values"));
    }
    let mean = math::mean(series);
    let centered: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0 = math::norm_sq(&centered) / t as f64;
    let tf = t as f64;
    if !(c0 > 0.0) {
        return Ok(tf);
    }
    let rho = |k: usize| -> f64 {
        let s: f64 = centered[..t - k].iter().zip(&centered[k..]).map(|(a, b)| a * b).sum();
        s / tf / c0
    };
    // Gamma_0 = rho_0 + rho_1 = 1 + rho_1; tau = -1 + 2 sum Gamma_m.
    let mut sum_pairs = 0.0;
    let mut m = 0;
    while 2 * m + 1 < t {
        let g = if m == 0 { 1.0 + rho(1) } else { rho(2 * m) + rho(2 * m + 1) };
        if g <= 0.0 {
            break;
        }
        sum_pairs += g;
        m += 1;
    }
    let tau = (-1.0 + 2.0 * sum_pairs).max(1.0 / tf);
    Ok((tf / tau).clamp(1.0, tf))
}

fn is_constant(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[0] == w[1])
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EssReport {
    pub per_coordinate_ess: Vec<f64>,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub min_ess_per_second: f64,
    pub total_seconds: f64,
    /// Coordinates that never moved; their ESS is reported as `T`.
    pub constant_coordinates: usize,
}

/// Per-coordinate ESS of `trace`, with the last wall time as the denominator.
pub fn ess_report(trace: &ChainTrace) -> Result<EssReport> {
    ess_report_with_seconds(trace, trace.total_seconds())
}

/// As [`ess_report`] with an explicit time denominator.
pub fn ess_report_with_seconds(trace: &ChainTrace, total_seconds: f64) -> Result<EssReport> {
    if trace.is_empty() {
        return Err(Error::invalid("ESS report needs a nonempty trace"));
    }
    let mut per = Vec::with_capacity(trace.dim());
    let mut constant = 0;
    for j in 0..trace.dim() {
        let col = trace.column(j);
        if is_constant(&col) {
            constant += 1;
        }
        per.push(ess(&col)?);
    }
    let mut sorted = per.clone();
    sorted.sort_by(f64::total_cmp);
    let min = sorted.first().copied().unwrap_or(0.0);
    let max = sorted.last().copied().unwrap_or(0.0);
    let median = math::quantile_sorted(&sorted, 0.5);
    let min_ess_per_second = if total_seconds > 0.0 {
        min / total_seconds
    } else {
        f64::INFINITY
    };
    Ok(EssReport {
        per_coordinate_ess: per,
        min,
        median,
        max,
        min_ess_per_second,
        total_seconds,
        constant_coordinates: constant,
    })
}

/// `minESS/s` of a method relative to a baseline.
pub fn spdup(model: &EssReport, baseline: &EssReport) -> Result<f64> {
    spdup_from_rates(model.min_ess_per_second, baseline.min_ess_per_second)
}

pub fn spdup_from_rates(model: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0 && baseline.is_finite()) {
        return Err(Error::invalid("baseline minESS/s must be positive and finite"));
    }
    Ok(model / baseline)
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegressionMetrics {
    pub mse: f64,
    /// Fraction of targets inside the predictive interval.
    pub cp: f64,
}

/// MSE of the predictive mean and interval coverage, over every output entry.
pub fn regression_metrics(pred: &PredictiveSummary, y_true: &Matrix) -> Result<RegressionMetrics> {
    ensure_len("target rows", pred.mean.rows(), y_true.rows())?;
    ensure_len("target columns", pred.mean.cols(), y_true.cols())?;
    let n = y_true.as_slice().len();
    if n == 0 {
        return Err(Error::invalid("no test targets"));
    }
    let mut se = 0.0;
    let mut inside = 0usize;
    for (idx, &y) in y_true.as_slice().iter().enumerate() {
        let r = pred.mean.as_slice()[idx] - y;
        se += r * r;
        if pred.lower.as_slice()[idx] <= y && y <= pred.upper.as_slice()[idx] {
            inside += 1;
        }
    }
    Ok(RegressionMetrics {
        mse: se / n as f64,
        cp: inside as f64 / n as f64,
    })
}

/// Equal-frequency reliability bins over max-class confidence.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CalibrationBins {
    /// `(lowest, highest)` confidence in each bin.
    pub bin_edges: Vec<(f64, f64)>,
    pub confidence: Vec<f64>,
    pub accuracy: Vec<f64>,
    pub count: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub ece: f64,
    pub bins: CalibrationBins,
}

pub const DEFAULT_ECE_BINS: usize = 10;

/// Sizes of `bins` consecutive groups covering `n` items, differing by at most one.
pub fn equal_frequency_sizes(n: usize, bins: usize) -> Vec<usize> {
    (0..bins).map(|b| n / bins + usize::from(b < n % bins)).collect()
}

/// ECE over equal-frequency bins of `(confidence, correct)` pairs.
///
/// Pairs are ordered by confidence, ties by correctness, so the result does
/// not depend on the order of the inputs.
pub fn calibration_bins(confidence: &[f64], correct: &[bool], bins: usize) -> Result<(f64, CalibrationBins)> {
    ensure_len("correctness flags", confidence.len(), correct.len())?;
    let n = confidence.len();
    if bins == 0 || n < bins {
        return Err(Error::invalid("need at least as many test points as bins"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        confidence[a]
            .total_cmp(&confidence[b])
            .then(correct[a].cmp(&correct[b]))
    });
    let mut out = CalibrationBins {
        bin_edges: Vec::with_capacity(bins),
        confidence: Vec::with_capacity(bins),
        accuracy: Vec::with_capacity(bins),
        count: Vec::with_capacity(bins),
    };
    let mut ece = 0.0;
    let mut start = 0;
    for size in equal_frequency_sizes(n, bins) {
        let idx = &order[start..start + size];
        start += size;
        let conf = idx.iter().map(|&i| confidence[i]).sum::<f64>() / size as f64;
        let acc = idx.iter().filter(|&&i| correct[i]).count() as f64 / size as f64;
        ece += size as f64 / n as f64 * (acc - conf).abs();
        out.bin_edges.push((confidence[idx[0]], confidence[idx[size - 1]]));
        out.confidence.push(conf);
        out.accuracy.push(acc);
        out.count.push(size);
    }
    Ok((ece, out))
}

/// Accuracy of the argmax labels and ECE on the max predicted probability.
pub fn classification_metrics(
    pred: &PredictiveSummary,
    labels: &[usize],
    bins: usize,
) -> Result<ClassificationMetrics> {
    if pred.task != Task::Classification {
        return Err(Error::invalid("classification metrics need a classification summary"));
    }
    ensure_len("labels", pred.mean.rows(), labels.len())?;
    let predicted = pred.labels.as_ref().ok_or_else(|| Error::invalid("summary has no labels"))?;
    let confidence: Vec<f64> = (0..labels.len())
        .map(|i| pred.mean.row(i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let correct: Vec<bool> = predicted.iter().zip(labels).map(|(p, l)| p == l).collect();
    let (ece, bins) = calibration_bins(&confidence, &correct, bins)?;
    let accuracy = correct.iter().filter(|&&c| c).count() as f64 / labels.len() as f64;
    Ok(ClassificationMetrics { accuracy, ece, bins })
}

// ---------------------------------------------------------------- bands

/// Unit direction of largest variance of the rows of `x`, signed so its
/// largest-magnitude entry is positive. `None` when every column is constant.
pub fn first_principal_component(x: &Matrix) -> Result<Option<Vec<f64>>> {
    if x.rows() < 2 {
        return Ok(None);
    }
    let cov = x.covariance();
    let (values, vectors) = symmetric_eigen(&cov)?;
    // Descending eigenvalues, eigenvectors as rows.
    let lambda = values.first().copied().ok_or_else(|| Error::invalid("empty design"))?;
    if !(lambda > 1e-12) {
        return Ok(None);
    }
    let mut v = vectors.row(0).to_vec();
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(1.0);
    if pivot < 0.0 {
        v.iter_mut().for_each(|c| *c = -*c);
    }
    Ok(Some(v))
}

/// Centered moving average; the window is truncated at the ends.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let back = (w - 1) / 2;
    let fwd = w - 1 - back;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + fwd + 1).min(values.len());
            math::mean(&values[lo..hi])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandRow {
    pub projection: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub truth: f64,
    pub smoothed_truth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CredibleBand {
    pub rows: Vec<BandRow>,
    pub direction: Vec<f64>,
    /// The design had no variance, so coordinate 0 was used.
    pub degenerate: bool,
}

/// 95% band of output 0 along the first principal component of `x_test`,
/// sorted by projection.
pub fn credible_band(draws: &PredictiveDraws, x_test: &Matrix, y_true: &[f64], window: usize) -> Result<CredibleBand> {
    if draws.len() < 2 {
        return Err(Error::invalid("credible band needs at least two draws"));
    }
    ensure_len("band inputs", draws.rows(), x_test.rows())?;
    ensure_len("band targets", x_test.rows(), y_true.len())?;
    let (direction, degenerate) = match first_principal_component(x_test)? {
        Some(v) => (v, false),
        None => {
            let mut e = vec![0.0; x_test.cols()];
            if let Some(first) = e.first_mut() {
                *first = 1.0;
            }
            (e, true)
        }
    };
    let means = x_test.column_means();
    let mut rows: Vec<BandRow> = (0..x_test.rows())
        .map(|i| {
            let proj = x_test
                .row(i)
                .iter()
                .zip(&means)
                .zip(&direction)
                .map(|((x, m), v)| (x - m) * v)
                .sum();
            let vals = draws.values_at(i, 0);
            BandRow {
                projection: proj,
                mean: math::mean(&vals),
                lower: math::quantile(&vals, 0.025),
                upper: math::quantile(&vals, 0.975),
                truth: y_true[i],
                smoothed_truth: 0.0,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.projection.total_cmp(&b.projection));
    let truth: Vec<f64> = rows.iter().map(|r| r.truth).collect();
    for (r, s) in rows.iter_mut().zip(moving_average(&truth, window)) {
        r.smoothed_truth = s;
    }
    Ok(CredibleBand {
        rows,
        direction,
        degenerate,
    })
}

// ---------------------------------------------------------------- Hellinger

/// Axis-aligned box split into `resolution` cells per axis (midpoint rule).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub resolution: usize,
}

impl Grid {
    pub fn validate(&self) -> Result<()> {
        ensure_len("grid bounds", self.lower.len(), self.upper.len())?;
        if self.lower.is_empty() || self.lower.len() > 2 {
            return Err(Error::invalid("grid must be 1- or 2-dimensional"));
        }
        if self.resolution < 32 {
            return Err(Error::invalid("grid resolution must be at least 32"));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| !(u > l)) {
            return Err(Error::invalid("grid upper bounds must exceed lower bounds"));
        }
        Ok(())
    }

    fn cell_area(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / self.resolution as f64)
            .product()
    }

    /// Cell midpoints in row-major order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let r = self.resolution;
        let mid = |axis: usize, i: usize| {
            let h = (self.upper[axis] - self.lower[axis]) / r as f64;
            self.lower[axis] + (i as f64 + 0.5) * h
        };
        match self.lower.len() {
            1 => (0..r).map(|i| vec![mid(0, i)]).collect(),
            _ => (0..r)
                .flat_map(|i| (0..r).map(move |j| (i, j)))
                .map(|(i, j)| vec![mid(0, i), mid(1, j)])
                .collect(),
        }
    }
}

/// `exp(-potential)` normalized on the grid (density values, not masses).
pub fn grid_density(potential: impl Fn(&[f64]) -> f64, grid: &Grid) -> Result<Vec<f64>> {
    grid.validate()?;
    let logs: Vec<f64> = grid.points().iter().map(|p| -potential(p)).collect();
    if logs.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("potential is not finite on the grid"));
    }
    let lse = math::log_sum_exp(&logs);
    let area = grid.cell_area();
    Ok(logs.iter().map(|l| math::exp(l - lse) / area).collect())
}

/// Hellinger distance between `exp(-a)` and `exp(-b)`, each normalized on the
/// grid: `sqrt(1/2 sum (sqrt(p_a) - sqrt(p_b))^2 dA)`.
pub fn hellinger_grid(a: impl Fn(&[f64]) -> f64, b: impl Fn(&[f64]) -> f64, grid: &Grid) -> Result<f64> {
    let pa = grid_density(a, grid)?;
    let pb = grid_density(b, grid)?;
    let area = grid.cell_area();
    let s: f64 = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| {
            let r = math::sqrt(*x) - math::sqrt(*y);
            r * r
        })
        .sum();
    Ok(math::sqrt(0.5 * s * area).clamp(0.0, 1.0))
}

// ---------------------------------------------------------------- mixture

/// Equal-weight mixture of isotropic 2-d Gaussians.
///
/// As a [`Target`] it has density `pi`. With `prior_variance = Some(c)` the
/// law is split as `exp(-Phi) N(0, c I)`, which is what pCN needs; without it
/// `Phi = -log pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureTarget {
    pub centers: Vec<[f64; 2]>,
    pub component_std: f64,
    pub weights: Vec<f64>,
    pub prior_variance: Option<f64>,
}

impl MixtureTarget {
    /// 5x5 grid of centers on `[-4, 4]^2` with standard deviation 0.1.
    pub fn grid25() -> Self {
        Self::grid(5, 4.0, 0.1)
    }

    pub fn grid(per_axis: usize, half_width: f64, component_std: f64) -> Self {
        let step = if per_axis > 1 {
            2.0 * half_width / (per_axis - 1) as f64
        } else {
            0.0
        };
        let coord = |i: usize| if per_axis > 1 { -half_width + i as f64 * step } else { 0.0 };
        let centers: Vec<[f64; 2]> = (0..per_axis)
            .flat_map(|i| (0..per_axis).map(move |j| [coord(i), coord(j)]))
            .collect();
        let k = centers.len();
        Self {
            centers,
            component_std,
            weights: vec![1.0 / k as f64; k],
            prior_variance: None,
        }
    }

    pub fn with_prior(mut self, variance: f64) -> Self {
        self.prior_variance = Some(variance);
        self
    }

    fn component_logs(&self, p: &[f64]) -> Vec<f64> {
        let s2 = self.component_std * self.component_std;
        let norm = -math::LN_2PI - math::ln(s2);
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                math::ln(*w) + norm - 0.5 * (dx * dx + dy * dy) / s2
            })
            .collect()
    }

    pub fn logpdf(&self, p: &[f64]) -> f64 {
        math::log_sum_exp(&self.component_logs(p))
    }

    fn grad_neg_logpdf(&self, p: &[f64], grad: &mut [f64]) {
        let logs = self.component_logs(p);
        let lse = math::log_sum_exp(&logs);
        let s2 = self.component_std * self.component_std;
        grad[0] = 0.0;
        grad[1] = 0.0;
        for (c, l) in self.centers.iter().zip(&logs) {
            let r = math::exp(l - lse);
            grad[0] += r * (p[0] - c[0]) / s2;
            grad[1] += r * (p[1] - c[1]) / s2;
        }
    }

    /// Fraction of points within `3 sigma` of some center, and the per-center
    /// fractions.
    pub fn mode_coverage<'a>(&self, points: impl IntoIterator<Item = &'a [f64]>) -> (f64, Vec<f64>) {
        let r2 = 9.0 * self.component_std * self.component_std;
        let mut per = vec![0usize; self.centers.len()];
        let mut n = 0usize;
        let mut hit = 0usize;
        for p in points {
            n += 1;
            if let Some(k) = self.centers.iter().position(|c| {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                dx * dx + dy * dy <= r2
            }) {
                hit += 1;
                per[k] += 1;
            }
        }
        let d = n.max(1) as f64;
        (hit as f64 / d, per.into_iter().map(|c| c as f64 / d).collect())
    }
}

impl Target for MixtureTarget {
    fn dim(&self) -> usize {
        2
    }

    fn potential(&self, theta: &[f64]) -> f64 {
        -self.logpdf(theta) - self.neg_log_prior(theta)
    }

    fn neg_log_prior(&self, theta: &[f64]) -> f64 {
        self.prior_variance
            .map_or(0.0, |c| 0.5 * math::norm_sq(theta) / c)
    }

    fn neg_log_posterior(&self, theta: &[f64]) -> f64 {
        -self.logpdf(theta)
    }

    fn grad_neg_log_posterior(&self, theta: &[f64], grad: &mut [f64]) -> Result<()> {
        ensure_len("mixture gradient", 2, grad.len())?;
        self.grad_neg_logpdf(theta, grad);
        Ok(())
    }

    fn prior_variance(&self) -> Option<f64> {
        self.prior_variance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{standard_normal, stream};

    #[test]
    fn constant_series_has_full_ess() {
        assert_eq!(ess(&[2.0; 50]).unwrap(), 50.0);
        assert!(ess(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ar1_ess_near_closed_form() {
        let mut rng = stream(11, 0);
        let rho: f64 = 0.9;
        let t = 100_000;
        let mut x = vec![0.0; t];
        for i in 1..t {
            x[i] = rho * x[i - 1] + math::sqrt(1.0 - rho * rho) * standard_normal(&mut rng);
        }
        let expect = t as f64 * (1.0 - rho) / (1.0 + rho);
        let got = ess(&x).unwrap();
        assert!((got / expect - 1.0).abs() < 0.2, "{got} vs {expect}");
    }

    #[test]
    fn two_bin_ece() {
        let mut conf = vec![0.6; 50];
        conf.extend(vec![0.9; 50]);
        let mut correct: Vec<bool> = (0..50).map(|i| i < 25).collect();
        correct.extend(vec![true; 50]);
        let (ece, bins) = calibration_bins(&conf, &correct, 2).unwrap();
        assert!((ece - 0.10).abs() < 1e-12, "{ece}");
        assert_eq!(bins.count, vec![50, 50]);
    }

    #[test]
    fn overconfident_ece() {
        let conf = vec![1.0; 10];
        let correct: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert!((calibration_bins(&conf, &correct, 5).unwrap().0 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pca_of_correlated_pair() {
        let mut rng = stream(2, 0);
        let rows: Vec<Vec<f64>> = (0..4000)
            .map(|_| {
                let a = standard_normal(&mut rng);
                let b = standard_normal(&mut rng);
                // Covariance [[2,1],[1,2]].
                let u = math::sqrt(1.5) * a + math::sqrt(0.5) * b;
                let v = math::sqrt(1.5) * a - math::sqrt(0.5) * b;
                vec![u, v]
            })
            .collect();
        let pc = first_principal_component(&Matrix::from_rows(&rows).unwrap()).unwrap().unwrap();
        let s = core::f64::consts::FRAC_1_SQRT_2;
        assert!((pc[0] - s).abs() < 0.05 && (pc[1] - s).abs() < 0.05, "{pc:?}");
    }

    #[test]
    fn hellinger_unit_gaussians() {
        let grid = Grid {
            lower: vec![-12.0],
            upper: vec![13.0],
            resolution: 512,
        };
        let d = hellinger_grid(|x| 0.5 * x[0] * x[0], |x| 0.5 * (x[0] - 1.0) * (x[0] - 1.0), &grid).unwrap();
        assert!((d * d - (1.0 - math::exp(-0.125))).abs() < 1e-3);
    }

    #[test]
    fn mixture_normalizes() {
        let t = MixtureTarget::grid25();
        let grid = Grid {
            lower: vec![-5.0, -5.0],
            upper: vec![5.0, 5.0],
            resolution: 800,
        };
        let area = (10.0 / 800.0) * (10.0 / 800.0);
        let mass: f64 = grid.points().iter().map(|p| math::exp(t.logpdf(p))).sum::<f64>() * area;
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }
}
